#include "partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rng.hpp"

namespace tailgame {

std::vector<int> Partition::overlap_set(int player) const {
    if (player < 0 || player >= num_players())
        throw ConfigError("player index " + std::to_string(player) + " out of range");
    std::vector<int> out;
    for (int l : subsets[player])
        if (active_players[l].size() > 1) out.push_back(l);
    return out;
}

int Partition::slot_of(int player, int label) const {
    const auto& s = subsets[player];
    auto it = std::lower_bound(s.begin(), s.end(), label);
    if (it == s.end() || *it != label) return -1;
    return static_cast<int>(it - s.begin());
}

Partition build_partition(const LabelStats& stats, int num_players, double rho,
                          std::uint64_t seed, double tail_fraction) {
    const int l_count = static_cast<int>(stats.freq.size());
    if (num_players < 1 || num_players > l_count)
        throw ConfigError("need 1 <= N <= L, got N=" + std::to_string(num_players) +
                          ", L=" + std::to_string(l_count));
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("overlap rho must be in [0,1)");

    Partition p;
    p.num_labels = l_count;
    p.overlap_rho = rho;
    p.seed = seed;
    p.subsets.assign(num_players, {});

    // round-robin over ascending frequency keeps head/tail counts balanced
    for (int i = 0; i < l_count; ++i)
        p.subsets[i % num_players].push_back(stats.ascending_order[i]);

    if (num_players > 1) {
        long target = std::lround((1.0 + rho) * l_count);
        long need = target - l_count;
        if (need > 0) {
            int tail_count = static_cast<int>(std::floor(tail_fraction * l_count));
            if (tail_count == 0)
                throw ConfigError("overlap requested but floor(q*L) = 0 tail labels exist");
            long achievable = static_cast<long>(tail_count) * (num_players - 1);
            if (need > achievable)
                throw ConfigError(
                    "overlap rho=" + std::to_string(rho) + " unreachable: need " +
                    std::to_string(need) + " duplications but tail duplication allows at most " +
                    std::to_string(achievable) + " (max rho ~ " +
                    std::to_string(static_cast<double>(achievable) / l_count) + ")");

            std::vector<std::vector<std::uint8_t>> owns(
                num_players, std::vector<std::uint8_t>(l_count, 0));
            std::vector<int> load(num_players);
            for (int i = 0; i < num_players; ++i) {
                load[i] = static_cast<int>(p.subsets[i].size());
                for (int l : p.subsets[i]) owns[i][l] = 1;
            }

            Rng rng(seed, /*stream=*/0x9a27);
            std::vector<std::pair<int, int>> extras;  // (label, extra player)
            while (need > 0) {
                // one pass: every tail label gains at most one extra player;
                // placements go to the least-loaded non-owner, ties and the
                // placement order resolved toward the globally smallest load
                std::vector<std::uint8_t> done(l_count, 0);
                long placed_this_pass = 0;
                while (need > 0) {
                    int best_load = l_count + 1;
                    std::vector<std::pair<int, int>> cands;
                    for (int t = 0; t < tail_count; ++t) {
                        const int l = stats.ascending_order[t];
                        if (done[l]) continue;
                        for (int i = 0; i < num_players; ++i) {
                            if (owns[i][l]) continue;
                            if (load[i] < best_load) {
                                best_load = load[i];
                                cands.assign(1, {l, i});
                            } else if (load[i] == best_load) {
                                cands.emplace_back(l, i);
                            }
                        }
                    }
                    if (cands.empty()) break;
                    auto [l, pick] = cands[rng.below(cands.size())];
                    owns[pick][l] = 1;
                    done[l] = 1;
                    p.subsets[pick].push_back(l);
                    ++load[pick];
                    extras.emplace_back(l, pick);
                    --need;
                    ++placed_this_pass;
                }
                if (placed_this_pass == 0) break;  // cannot happen given the bound above
            }

            // relocate extras until the load spread is within 2
            for (;;) {
                int pmin = 0, pmax = 0;
                for (int i = 1; i < num_players; ++i) {
                    if (load[i] < load[pmin]) pmin = i;
                    if (load[i] > load[pmax]) pmax = i;
                }
                if (load[pmax] - load[pmin] <= 2) break;
                bool moved = false;
                for (auto& [l, owner] : extras) {
                    if (owner != pmax || owns[pmin][l]) continue;
                    owns[pmax][l] = 0;
                    owns[pmin][l] = 1;
                    auto& s = p.subsets[pmax];
                    s.erase(std::find(s.begin(), s.end(), l));
                    p.subsets[pmin].push_back(l);
                    --load[pmax];
                    ++load[pmin];
                    owner = pmin;
                    moved = true;
                    break;
                }
                if (!moved) break;  // every extra of the max player is owned by the min one
            }
        }
    }

    for (auto& s : p.subsets) std::sort(s.begin(), s.end());
    p.active_players.assign(l_count, {});
    for (int i = 0; i < num_players; ++i)
        for (int l : p.subsets[i]) p.active_players[l].push_back(i);
    for (auto& a : p.active_players) std::sort(a.begin(), a.end());
    return p;
}

void write_partition(const Partition& p, std::ostream& out) {
    out << "tailgame-partition v1\n";
    out << "labels " << p.num_labels << '\n';
    out << "players " << p.num_players() << '\n';
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", p.overlap_rho);
    out << "rho " << buf << '\n';
    out << "seed " << p.seed << '\n';
    for (int i = 0; i < p.num_players(); ++i) {
        out << "player " << i << ':';
        for (int l : p.subsets[i]) out << ' ' << l;
        out << '\n';
    }
}

void write_partition_file(const Partition& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_partition(p, out);
}

Partition parse_partition(std::istream& in) {
    std::string line;
    long line_no = 1;
    if (!std::getline(in, line) || line != "tailgame-partition v1")
        throw ParseError(line_no, "expected header 'tailgame-partition v1'");

    Partition p;
    int num_players = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "labels") {
            ls >> p.num_labels;
        } else if (key == "players") {
            ls >> num_players;
        } else if (key == "rho") {
            ls >> p.overlap_rho;
        } else if (key == "seed") {
            ls >> p.seed;
        } else if (key == "player") {
            int idx;
            char colon;
            ls >> idx >> std::noskipws >> colon;
            if (!ls || colon != ':') throw ParseError(line_no, "malformed player line");
            ls >> std::skipws;
            std::vector<int> ids;
            int l;
            while (ls >> l) {
                if (l < 0 || l >= p.num_labels)
                    throw ParseError(line_no, "label id out of range");
                ids.push_back(l);
            }
            if (idx != static_cast<int>(p.subsets.size()))
                throw ParseError(line_no, "player indices must be consecutive from 0");
            p.subsets.push_back(std::move(ids));
        } else {
            throw ParseError(line_no, "unknown key '" + key + "'");
        }
    }
    if (num_players != static_cast<int>(p.subsets.size()))
        throw ParseError(line_no, "declared player count does not match player lines");
    if (p.num_labels <= 0) throw ParseError(line_no, "missing label count");

    for (auto& s : p.subsets) std::sort(s.begin(), s.end());
    p.active_players.assign(p.num_labels, {});
    for (int i = 0; i < static_cast<int>(p.subsets.size()); ++i)
        for (int l : p.subsets[i]) p.active_players[l].push_back(i);
    for (int l = 0; l < p.num_labels; ++l)
        if (p.active_players[l].empty())
            throw ParseError(line_no, "label " + std::to_string(l) + " has no player");
    return p;
}

Partition read_partition_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_partition(in);
}

}  // namespace tailgame
