#pragma once

#include "mghf/config.hpp"
#include "mghf/conv.hpp"
#include "mghf/csc.hpp"
#include "mghf/dfe.hpp"
#include "mghf/errors.hpp"
#include "mghf/grad_check.hpp"
#include "mghf/image_io.hpp"
#include "mghf/lip.hpp"
#include "mghf/loss.hpp"
#include "mghf/pruning.hpp"
#include "mghf/report.hpp"
#include "mghf/rng.hpp"
#include "mghf/tensor.hpp"
#include "mghf/trainer.hpp"
#include "mghf/weights_io.hpp"
