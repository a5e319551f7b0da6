#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"

namespace rpgraph {

/// Compressed sparse adjacency. Undirected graphs store both (u,v) and
/// (v,u); self loops are stored once. Neighbor lists are sorted by id
/// and duplicate entries have been merged by weight summation.
struct SparseGraph {
    NodeId node_count = 0;
    std::vector<std::size_t> row_ptr;  // node_count + 1
    std::vector<NodeId> col;
    std::vector<double> weight;
    bool directed = false;
    /// Two-coloring (0/1 per node); present iff the graph is bipartite.
    std::optional<std::vector<std::uint8_t>> partition;
    /// Dense id -> original token. Empty when ids were numeric (identity).
    std::vector<std::string> id_names;

    std::size_t entry_count() const { return col.size(); }

    std::size_t degree(NodeId i) const { return row_ptr[i + 1] - row_ptr[i]; }

    std::span<const NodeId> neighbors(NodeId i) const {
        return {col.data() + row_ptr[i], degree(i)};
    }
    std::span<const double> weights(NodeId i) const {
        return {weight.data() + row_ptr[i], degree(i)};
    }

    bool has_edge(NodeId u, NodeId v) const {
        auto ns = neighbors(u);
        return std::binary_search(ns.begin(), ns.end(), v);
    }

    double weighted_degree(NodeId i) const {
        std::vector<double> terms(weights(i).begin(), weights(i).end());
        return ordered_sum(terms);
    }

    /// Number of edges: directed entries, or unordered pairs (self loops
    /// count once) for undirected graphs.
    std::size_t edge_count() const {
        if (directed) return entry_count();
        std::size_t self = 0;
        for (NodeId i = 0; i < node_count; ++i)
            for (NodeId j : neighbors(i))
                if (j == i) ++self;
        return (entry_count() - self) / 2 + self;
    }

    std::string original_id(NodeId i) const {
        return id_names.empty() ? std::to_string(i) : id_names[i];
    }
};

/// Row-stochastic single-step walk matrix. Every row sums to 1; isolated
/// nodes carry a unit self loop so walks never die.
struct TransitionMatrix {
    NodeId node_count = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<NodeId> col;
    std::vector<double> prob;

    std::size_t degree(NodeId i) const { return row_ptr[i + 1] - row_ptr[i]; }
    std::span<const NodeId> cols(NodeId i) const { return {col.data() + row_ptr[i], degree(i)}; }
    std::span<const double> probs(NodeId i) const { return {prob.data() + row_ptr[i], degree(i)}; }
};

struct NodeSplit {
    std::vector<NodeId> a_nodes;  // original ids, ascending
    std::vector<NodeId> b_nodes;
    std::vector<std::uint8_t> side_of;  // 0 -> a, 1 -> b
    std::vector<NodeId> local_id;       // original id -> id within its side
};

struct LoadOptions {
    bool directed = false;
    bool weighted = false;
    bool bipartite = false;
};

namespace detail {

struct RawEdge {
    NodeId src, dst;
    double w;
};

/// Mirror (undirected), sort, merge duplicates, build CSR.
inline SparseGraph assemble(NodeId node_count, std::vector<RawEdge> edges, bool directed,
                            std::optional<std::vector<std::uint8_t>> partition,
                            std::vector<std::string> id_names) {
    if (!directed) {
        const std::size_t n = edges.size();
        edges.reserve(2 * n);
        for (std::size_t k = 0; k < n; ++k)
            if (edges[k].src != edges[k].dst)
                edges.push_back({edges[k].dst, edges[k].src, edges[k].w});
    }
    std::sort(edges.begin(), edges.end(), [](const RawEdge& a, const RawEdge& b) {
        return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
    });
    SparseGraph g;
    g.node_count = node_count;
    g.directed = directed;
    g.partition = std::move(partition);
    g.id_names = std::move(id_names);
    g.row_ptr.assign(node_count + 1, 0);
    g.col.reserve(edges.size());
    g.weight.reserve(edges.size());
    for (std::size_t k = 0; k < edges.size();) {
        std::size_t e = k + 1;
        double w = edges[k].w;
        while (e < edges.size() && edges[e].src == edges[k].src && edges[e].dst == edges[k].dst) {
            w += edges[e].w;
            ++e;
        }
        g.col.push_back(edges[k].dst);
        g.weight.push_back(w);
        g.row_ptr[edges[k].src + 1]++;
        k = e;
    }
    for (NodeId i = 0; i < node_count; ++i) g.row_ptr[i + 1] += g.row_ptr[i];
    return g;
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::string tmp(s);
    out = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size() && std::isfinite(out);
}

}  // namespace detail

/// Build a graph from an in-memory edge list (tests, generators).
inline SparseGraph make_graph(NodeId node_count,
                              const std::vector<std::tuple<NodeId, NodeId, double>>& edges,
                              bool directed = false,
                              std::optional<std::vector<std::uint8_t>> partition = std::nullopt) {
    std::vector<detail::RawEdge> raw;
    raw.reserve(edges.size());
    for (auto& [u, v, w] : edges) {
        if (u >= node_count || v >= node_count)
            throw ValidationError("edge endpoint out of range");
        if (!(w > 0)) throw ValidationError("edge weight must be positive");
        raw.push_back({u, v, w});
    }
    return detail::assemble(node_count, std::move(raw), directed, std::move(partition), {});
}

/// Parse `src dst [weight]` lines (tab or space separated, `#` comments
/// skipped). Numeric ids are used as-is; otherwise tokens are interned
/// in first-seen order. Undirected inputs are symmetrized and duplicate
/// edges merged by weight sum.
inline SparseGraph load_edge_list(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list: " + path.string());

    std::vector<std::string> tokens;              // interned id tokens, first-seen order
    std::unordered_map<std::string, NodeId> ids;  // token -> interned id
    bool all_numeric = true;
    std::vector<std::uint64_t> numeric_value;  // parallel to tokens

    auto intern = [&](std::string_view tok) -> NodeId {
        auto it = ids.find(std::string(tok));
        if (it != ids.end()) return it->second;
        const NodeId id = static_cast<NodeId>(tokens.size());
        tokens.emplace_back(tok);
        ids.emplace(tokens.back(), id);
        std::uint64_t v = 0;
        if (all_numeric && detail::parse_u64(tok, v))
            numeric_value.push_back(v);
        else
            all_numeric = false;
        return id;
    };

    std::vector<detail::RawEdge> edges;  // src/dst are interned ids here
    std::vector<std::uint8_t> side_of;   // per interned id, 0/1/0xff = unset

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv(line);
        while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t' || sv.front() == '\r'))
            sv.remove_prefix(1);
        if (sv.empty() || sv.front() == '#') continue;

        std::array<std::string_view, 4> field;
        std::size_t nfield = 0;
        while (!sv.empty() && nfield < field.size()) {
            std::size_t end = sv.find_first_of(" \t\r");
            field[nfield++] = sv.substr(0, end);
            sv = end == std::string_view::npos ? std::string_view{} : sv.substr(end);
            while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t' || sv.front() == '\r'))
                sv.remove_prefix(1);
        }
        if (nfield < 2 || nfield > 3 || !sv.empty())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected `src dst [weight]`");

        double w = 1.0;
        if (nfield == 3) {
            double parsed = 0;
            if (!detail::parse_double(field[2], parsed))
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": bad weight `" + std::string(field[2]) + "`");
            if (!(parsed > 0))
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": weight must be positive, got " + std::string(field[2]));
            if (options.weighted) w = parsed;
        }

        const NodeId u = intern(field[0]);
        const NodeId v = intern(field[1]);
        if (options.bipartite) {
            const NodeId hi = std::max(u, v);
            if (side_of.size() <= hi) side_of.resize(hi + 1, 0xff);
            if (side_of[u] == 0xff) side_of[u] = 0;
            if (side_of[v] == 0xff) side_of[v] = 1;
            if (side_of[u] == side_of[v])
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": edge inside one partition of a bipartite graph");
        }
        edges.push_back({u, v, w});
    }

    NodeId node_count = static_cast<NodeId>(tokens.size());
    std::vector<std::string> names;
    std::optional<std::vector<std::uint8_t>> partition;

    if (all_numeric) {
        // Numeric ids are dense ids themselves; remap interned -> value.
        std::uint64_t max_id = 0;
        for (std::uint64_t v : numeric_value) max_id = std::max(max_id, v);
        if (!numeric_value.empty() && max_id >= (std::uint64_t(1) << 32))
            throw ValidationError("numeric node id exceeds 32-bit range");
        node_count = numeric_value.empty() ? 0 : static_cast<NodeId>(max_id + 1);
        for (auto& e : edges) {
            e.src = static_cast<NodeId>(numeric_value[e.src]);
            e.dst = static_cast<NodeId>(numeric_value[e.dst]);
        }
        if (options.bipartite) {
            std::vector<std::uint8_t> part(node_count, 0);
            for (NodeId t = 0; t < tokens.size(); ++t)
                if (side_of.size() > t && side_of[t] != 0xff)
                    part[numeric_value[t]] = side_of[t];
            partition = std::move(part);
        }
    } else {
        names = tokens;
        if (options.bipartite) {
            side_of.resize(node_count, 0xff);
            for (auto& s : side_of)
                if (s == 0xff) s = 0;
            partition = std::vector<std::uint8_t>(side_of.begin(), side_of.end());
        }
    }
    return detail::assemble(node_count, std::move(edges), options.directed, std::move(partition),
                            std::move(names));
}

/// Undirected view of a graph: directed entries (u,v) and (v,u) merge by
/// weight sum into one undirected edge. Already-undirected graphs come
/// back unchanged.
inline SparseGraph symmetrize(const SparseGraph& g) {
    if (!g.directed) return g;
    std::vector<detail::RawEdge> edges;
    for (NodeId u = 0; u < g.node_count; ++u) {
        const auto cols = g.neighbors(u);
        const auto ws = g.weights(u);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const NodeId v = cols[k];
            if (v >= u) edges.push_back({u, v, ws[k]});
            else edges.push_back({v, u, ws[k]});  // fold into canonical orientation
        }
    }
    return detail::assemble(g.node_count, std::move(edges), /*directed=*/false, g.partition,
                            g.id_names);
}

/// Row-normalize edge weights into step probabilities. Row sums use
/// value-ordered accumulation so relabeling a graph cannot perturb the
/// resulting probabilities bitwise.
inline TransitionMatrix transition_matrix(const SparseGraph& g) {
    TransitionMatrix t;
    t.node_count = g.node_count;
    t.row_ptr.assign(g.node_count + 1, 0);
    t.col.reserve(g.entry_count() + g.node_count);
    t.prob.reserve(g.entry_count() + g.node_count);
    for (NodeId i = 0; i < g.node_count; ++i) {
        if (g.degree(i) == 0) {
            t.col.push_back(i);
            t.prob.push_back(1.0);
        } else {
            const double total = g.weighted_degree(i);
            for (std::size_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
                t.col.push_back(g.col[k]);
                t.prob.push_back(g.weight[k] / total);
            }
        }
        t.row_ptr[i + 1] = t.col.size();
    }
    return t;
}

/// Two-step transition restricted to one side of a bipartite graph,
/// plus the original ids of that side in row order.
struct SideTransition {
    TransitionMatrix transition;
    std::vector<NodeId> nodes;  // row index -> original node id
};

inline SideTransition bipartite_square(const SparseGraph& g, std::uint8_t side) {
    if (!g.partition) throw ValidationError("bipartite_square requires a bipartite graph");
    if (g.directed) throw ValidationError("bipartite_square requires an undirected graph");
    const auto& part = *g.partition;
    const TransitionMatrix one_step = transition_matrix(g);

    SideTransition out;
    std::vector<NodeId> side_index(g.node_count, 0);
    for (NodeId i = 0; i < g.node_count; ++i) {
        if (part[i] == side) {
            side_index[i] = static_cast<NodeId>(out.nodes.size());
            out.nodes.push_back(i);
        }
    }
    auto& t = out.transition;
    t.node_count = static_cast<NodeId>(out.nodes.size());
    t.row_ptr.assign(t.node_count + 1, 0);

    std::vector<double> acc(t.node_count, 0.0);
    std::vector<NodeId> touched;
    for (NodeId su = 0; su < t.node_count; ++su) {
        const NodeId u = out.nodes[su];
        if (g.degree(u) == 0) {
            t.col.push_back(su);
            t.prob.push_back(1.0);
            t.row_ptr[su + 1] = t.col.size();
            continue;
        }
        touched.clear();
        auto ucols = one_step.cols(u);
        auto uprobs = one_step.probs(u);
        for (std::size_t a = 0; a < ucols.size(); ++a) {
            const NodeId v = ucols[a];
            auto vcols = one_step.cols(v);
            auto vprobs = one_step.probs(v);
            for (std::size_t b = 0; b < vcols.size(); ++b) {
                const NodeId w = vcols[b];
                const NodeId sw = side_index[w];
                if (acc[sw] == 0.0) touched.push_back(sw);
                acc[sw] += uprobs[a] * vprobs[b];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (NodeId sw : touched) {
            t.col.push_back(sw);
            t.prob.push_back(acc[sw]);
            acc[sw] = 0.0;
        }
        t.row_ptr[su + 1] = t.col.size();
    }
    return out;
}

/// Random disjoint node split; cross edges are dropped from both induced
/// subgraphs. Deterministic for a fixed seed.
inline std::tuple<SparseGraph, SparseGraph, NodeSplit> split_nodes(const SparseGraph& g,
                                                                   double fraction,
                                                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must be in (0,1)");
    std::vector<NodeId> perm(g.node_count);
    for (NodeId i = 0; i < g.node_count; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t size_a =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(g.node_count)));

    NodeSplit split;
    split.side_of.assign(g.node_count, 1);
    for (std::size_t k = 0; k < size_a; ++k) split.side_of[perm[k]] = 0;
    split.local_id.assign(g.node_count, 0);
    for (NodeId i = 0; i < g.node_count; ++i) {
        if (split.side_of[i] == 0) {
            split.local_id[i] = static_cast<NodeId>(split.a_nodes.size());
            split.a_nodes.push_back(i);
        } else {
            split.local_id[i] = static_cast<NodeId>(split.b_nodes.size());
            split.b_nodes.push_back(i);
        }
    }

    auto induce = [&](std::uint8_t side, const std::vector<NodeId>& nodes) {
        std::vector<detail::RawEdge> edges;
        for (NodeId u : nodes) {
            auto cols = g.neighbors(u);
            auto ws = g.weights(u);
            for (std::size_t k = 0; k < cols.size(); ++k) {
                const NodeId v = cols[k];
                if (split.side_of[v] != side) continue;
                if (!g.directed && v < u) continue;  // mirrored below
                edges.push_back({split.local_id[u], split.local_id[v], ws[k]});
            }
        }
        std::optional<std::vector<std::uint8_t>> part;
        if (g.partition) {
            std::vector<std::uint8_t> p(nodes.size());
            for (std::size_t k = 0; k < nodes.size(); ++k) p[k] = (*g.partition)[nodes[k]];
            part = std::move(p);
        }
        std::vector<std::string> names;
        if (!g.id_names.empty()) {
            names.reserve(nodes.size());
            for (NodeId u : nodes) names.push_back(g.id_names[u]);
        }
        return detail::assemble(static_cast<NodeId>(nodes.size()), std::move(edges), g.directed,
                                std::move(part), std::move(names));
    };
    return {induce(0, split.a_nodes), induce(1, split.b_nodes), std::move(split)};
}

inline Digest graph_digest(const SparseGraph& g) {
    Sha256 h;
    h.update("GRF1", 4);
    h.update_value(static_cast<std::uint64_t>(g.node_count));
    h.update_value(static_cast<std::uint8_t>(g.directed));
    h.update_value(static_cast<std::uint8_t>(g.partition.has_value()));
    if (g.partition) h.update(g.partition->data(), g.partition->size());
    for (NodeId i = 0; i < g.node_count; ++i) {
        h.update_value(static_cast<std::uint64_t>(g.degree(i)));
        for (std::size_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
            h.update_value(static_cast<std::uint64_t>(g.col[k]));
            h.update_value(g.weight[k]);
        }
    }
    for (const auto& name : g.id_names) {
        h.update_value(static_cast<std::uint64_t>(name.size()));
        h.update(name.data(), name.size());
    }
    return h.finish();
}

inline Digest transition_digest(const TransitionMatrix& t) {
    Sha256 h;
    h.update("TRN1", 4);
    h.update_value(static_cast<std::uint64_t>(t.node_count));
    for (NodeId i = 0; i < t.node_count; ++i) {
        h.update_value(static_cast<std::uint64_t>(t.degree(i)));
        for (std::size_t k = t.row_ptr[i]; k < t.row_ptr[i + 1]; ++k) {
            h.update_value(static_cast<std::uint64_t>(t.col[k]));
            h.update_value(t.prob[k]);
        }
    }
    return h.finish();
}

/// Persist the dense-id -> original-id mapping as `id<TAB>original`.
inline void write_id_map(const SparseGraph& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write id map: " + path.string());
    for (NodeId i = 0; i < g.node_count; ++i) out << i << '\t' << g.original_id(i) << '\n';
    if (!out) throw IoError("failed writing id map: " + path.string());
}

}  // namespace rpgraph
