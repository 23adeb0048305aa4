#pragma once

#include "repcali/calibration.hpp"
#include "repcali/checkpoint.hpp"
#include "repcali/config.hpp"
#include "repcali/errors.hpp"
#include "repcali/experiment.hpp"
#include "repcali/grad_check.hpp"
#include "repcali/latent.hpp"
#include "repcali/methods.hpp"
#include "repcali/metrics.hpp"
#include "repcali/model.hpp"
#include "repcali/ops.hpp"
#include "repcali/optim.hpp"
#include "repcali/random.hpp"
#include "repcali/tasks.hpp"
#include "repcali/tensor.hpp"
#include "repcali/trainer.hpp"
