// SPDX-License-Identifier: Apache-2.0
//
// Model internals -> per-touchpoint credit. Attention crediting sums key-side
// attention mass over heads and unmasked queries and row-normalizes; the
// incremental baseline takes clamped deltas of prefix conversion
// probabilities; last-touch is the classical baseline. Rollups aggregate
// credits by channel/campaign/kind or emit the day-gap decay curve.
#pragma once

#include <string>
#include <vector>

#include "lidda/journey.h"
#include "lidda/model.h"
#include "lidda/tensor.h"

namespace lidda {

// attn: per-head [N, N] attention matrices for this path.
std::vector<double> attention_credits(const std::vector<Tensor>& attn, int path_len);

std::vector<double> incremental_credits(AttributionModel& model, const Path& path);

std::vector<double> last_touch_credits(const Path& path);

AttributionResult credit_path(AttributionModel& model, const Path& path, Method method);

enum class RollupLevel { channel, campaign, kind, day_gap };

RollupLevel rollup_level_from_name(const std::string& name);

// channel/campaign/kind: credit shares per key, normalized to 1.
// day_gap: mean credit per touch at each days-before-conversion value.
std::vector<std::pair<std::string, double>> rollup(
    const std::vector<AttributionResult>& results, const std::vector<Path>& paths,
    RollupLevel level);

void write_rollup(const std::vector<std::pair<std::string, double>>& shares,
                  const std::string& file);
std::vector<std::pair<std::string, double>> read_rollup(const std::string& file);

}  // namespace lidda
