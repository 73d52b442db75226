#pragma once

#include "cwn/error.hpp"
#include "cwn/point_cloud.hpp"
#include "cwn/io.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/pca.hpp"
#include "cwn/sampling.hpp"
#include "cwn/confidence.hpp"
#include "cwn/autodiff/tensor.hpp"
#include "cwn/autodiff/ops.hpp"
#include "cwn/autodiff/grad_check.hpp"
#include "cwn/model.hpp"
#include "cwn/loss.hpp"
#include "cwn/datagen.hpp"
#include "cwn/trainer.hpp"
#include "cwn/orientation.hpp"
#include "cwn/baselines.hpp"
#include "cwn/eval.hpp"
#include "cwn/diagnostics.hpp"
