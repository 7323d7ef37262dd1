#include <algorithm>

#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"

namespace deepcq {

std::string_view split_mode_name(SplitMode m) {
    return m == SplitMode::OddEven ? "odd_even" : "last_timestep_out";
}

SplitMode parse_split_mode(std::string_view name) {
    if (name == "odd_even") return SplitMode::OddEven;
    if (name == "last_timestep_out") return SplitMode::LastTimestepOut;
    throw ArgumentError("unknown split mode '" + std::string(name) + "'");
}

std::pair<LabelTable, LabelTable> split(const LabelTable& labels, const SplitSpec& spec) {
    const auto ts = labels.timesteps();
    if (ts.size() < 2)
        throw SplitError("split needs at least 2 timesteps, labels have " + std::to_string(ts.size()));
    const std::uint32_t last = ts.back();
    auto is_train = [&](std::uint32_t t) { return spec.mode == SplitMode::OddEven ? t % 2 == 1 : t != last; };

    std::pair<LabelTable, LabelTable> out;
    out.first.provenance = labels.provenance;
    out.second.provenance = labels.provenance;
    for (const auto& r : labels.rows) (is_train(r.timestep) ? out.first : out.second).rows.push_back(r);
    if (out.first.rows.empty() || out.second.rows.empty())
        throw SplitError(std::string(split_mode_name(spec.mode)) + " split leaves one side empty");
    return out;
}

}  // namespace deepcq
