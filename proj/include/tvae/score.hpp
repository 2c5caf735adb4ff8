#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tvae/failure_forge.hpp"
#include "tvae/reward.hpp"

namespace tvae {

RewardTarget target_for(const SyntheticSample& s);

/// Lenient parse of one raw turn, pixel coordinates converted with the
/// sample's screen dims, then the composite reward. Unusable turns get
/// unparsed_reward.
RewardBreakdown score_output(const SyntheticSample& sample, std::string_view raw, const RewardConfig& cfg,
                             const EffectScorer& scorer);

/// Throws AlignmentMismatch when the two lists differ in length.
std::vector<RewardBreakdown> score_serial(std::span<const SyntheticSample> samples,
                                          std::span<const std::string> outputs, const RewardConfig& cfg);
std::vector<RewardBreakdown> score_parallel(std::span<const SyntheticSample> samples,
                                            std::span<const std::string> outputs, const RewardConfig& cfg,
                                            int threads = 0);

/// JSONL with one {"output": "<raw turn text>"} object per line.
std::vector<std::string> read_outputs(const std::filesystem::path& path);

}  // namespace tvae
