// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/input.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/arbitration/policy_io.hpp"
#include "cospec/common.hpp"
#include "cospec/diagnostics/analysis.hpp"
#include "cospec/diagnostics/branch.hpp"
#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/model_io.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/lm/tabular_model.hpp"
#include "cospec/lm/task.hpp"
#include "cospec/rl/credit.hpp"
#include "cospec/rl/grpo.hpp"
#include "cospec/rl/loss.hpp"
#include "cospec/rl/optimizer.hpp"
#include "cospec/rl/sft.hpp"
#include "cospec/spd/engine.hpp"
#include "cospec/spd/round.hpp"
#include "cospec/spd/stats.hpp"
#include "cospec/spd/trace_io.hpp"
#include "cospec/spd/types.hpp"
