#pragma once

// Umbrella header for the FMSR super-resolution library.

#include "blocks.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "data.hpp"
#include "eval.hpp"
#include "fft.hpp"
#include "image_io.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "scan.hpp"
#include "selftest.hpp"
#include "tensor.hpp"
#include "train.hpp"
