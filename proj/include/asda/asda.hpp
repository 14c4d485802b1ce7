#pragma once

// Umbrella header.

#include "asda/attention.hpp"
#include "asda/checkpoint.hpp"
#include "asda/config.hpp"
#include "asda/decoder.hpp"
#include "asda/encoder.hpp"
#include "asda/fbank.hpp"
#include "asda/frontend.hpp"
#include "asda/gradcheck.hpp"
#include "asda/masking.hpp"
#include "asda/metrics.hpp"
#include "asda/model.hpp"
#include "asda/objective.hpp"
#include "asda/ops.hpp"
#include "asda/optim.hpp"
#include "asda/synthetic.hpp"
#include "asda/tensor.hpp"
#include "asda/train.hpp"
#include "asda/wav.hpp"
