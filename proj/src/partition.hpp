#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace tailgame {

// Overlapping decomposition of the label space across N players. Immutable
// once built; freely shared between threads.
struct Partition {
    std::vector<std::vector<int>> subsets;         // player -> sorted label ids
    std::vector<std::vector<int>> active_players;  // label -> ascending player ids
    int num_labels = 0;
    double overlap_rho = 0.0;
    std::uint64_t seed = 0;

    int num_players() const { return static_cast<int>(subsets.size()); }

    double coverage_factor() const {
        long total = 0;
        for (const auto& s : subsets) total += static_cast<long>(s.size());
        return static_cast<double>(total) / num_labels;
    }

    // O_i: labels of player i shared with at least one other player
    std::vector<int> overlap_set(int player) const;

    // position of label l within player i's subset, -1 if absent
    int slot_of(int player, int label) const;
};

// Round-robin over the ascending-frequency order, then tail labels duplicated
// onto extra players until the coverage target round((1+rho)*L) is met.
Partition build_partition(const LabelStats& stats, int num_players, double rho,
                          std::uint64_t seed, double tail_fraction = 0.2);

void write_partition(const Partition& p, std::ostream& out);
void write_partition_file(const Partition& p, const std::string& path);
Partition parse_partition(std::istream& in);
Partition read_partition_file(const std::string& path);

}  // namespace tailgame
