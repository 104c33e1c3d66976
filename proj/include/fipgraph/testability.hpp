#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fipgraph/fault_sim.hpp"
#include "fipgraph/netlist.hpp"

namespace fipgraph {

/// Stand-in for "cannot be controlled/observed within the unrolled frames".
inline constexpr std::uint64_t kScoapUnreachable = 1'000'000'000ULL;

/// Per-frame SCOAP values, indexed [frame][line].
struct ScoapFrames {
    std::size_t n_frames = 0;
    std::size_t n_lines = 0;
    std::vector<std::uint64_t> cc0, cc1, co;

    [[nodiscard]] std::size_t index(std::size_t frame, LineId line) const { return frame * n_lines + line; }
};

/// Per-frame COP values, indexed [frame][line].
struct CopFrames {
    std::size_t n_frames = 0;
    std::size_t n_lines = 0;
    std::vector<double> c1, o;

    [[nodiscard]] std::size_t index(std::size_t frame, LineId line) const { return frame * n_lines + line; }
};

/// SCOAP over `n_frames` unrolled copies. Flip-flops reset to 0 at frame 0.
[[nodiscard]] ScoapFrames compute_scoap(const Circuit& circuit, std::size_t n_frames,
                                        const ObservationSet& observe = {});
/// COP signal and observation probabilities over `n_frames` unrolled copies.
[[nodiscard]] CopFrames compute_cop(const Circuit& circuit, std::size_t n_frames, const ObservationSet& observe = {});

struct MinMax {
    double min = 0;
    double max = 0;
};

/// x -> (x - min) / (max - min); all zeros when max == min.
[[nodiscard]] std::vector<double> minmax_normalize(std::span<const double> values, MinMax* used = nullptr);

struct TestabilityFrames {
    ScoapFrames scoap;
    CopFrames cop;
    std::vector<double> cc0n, cc1n, con;
    MinMax cc0_range, cc1_range, co_range;

    [[nodiscard]] std::size_t n_frames() const { return scoap.n_frames; }
    [[nodiscard]] std::size_t n_lines() const { return scoap.n_lines; }
    [[nodiscard]] std::size_t index(std::size_t frame, LineId line) const { return scoap.index(frame, line); }
};

/// Per-circuit, per-metric normalization over all lines and frames.
/// Unreachable SCOAP entries are first replaced by the largest reachable value.
[[nodiscard]] TestabilityFrames normalize_minmax(ScoapFrames scoap, CopFrames cop);

[[nodiscard]] TestabilityFrames compute_testability(const Circuit& circuit, std::size_t n_frames,
                                                    const ObservationSet& observe = {});

/// CSV `line,cycle,cc0n,cc1n,con,c1,o`, cycles 1-based.
[[nodiscard]] std::string testability_csv(const Circuit& circuit, const TestabilityFrames& frames);

}  // namespace fipgraph
