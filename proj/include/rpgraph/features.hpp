#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"
#include "rpgraph/graph.hpp"
#include "rpgraph/io.hpp"
#include "rpgraph/rproj.hpp"

namespace rpgraph {

// ---------------------------------------------------------------------------
// Walk meeting-probability features. F(k,s) for nodes i,j is the chance
// that a k-step walk from i and an s-step walk from j end at the same
// node; rows of the projection stack estimate it by plain dot products.
// ---------------------------------------------------------------------------

/// (k,s) with k <= s <= N, lexicographic. Length (N+1)(N+2)/2.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> power_pairs_upper(std::uint32_t n) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::uint32_t k = 0; k <= n; ++k)
        for (std::uint32_t s = k; s <= n; ++s) out.emplace_back(k, s);
    return out;
}

/// All (k,s) with 0 <= k,s <= N, lexicographic. Length (N+1)^2.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> power_pairs_all(std::uint32_t n) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::uint32_t k = 0; k <= n; ++k)
        for (std::uint32_t s = 0; s <= n; ++s) out.emplace_back(k, s);
    return out;
}

inline std::size_t node_feature_count(std::uint32_t n) {
    return std::size_t(n + 1) * (n + 2) / 2;
}

/// ii-block + ij-block + jj-block: (N+1)(N+2) + (N+1)^2.
inline std::size_t pair_feature_count(std::uint32_t n) {
    return 2 * node_feature_count(n) + std::size_t(n + 1) * (n + 1);
}

namespace detail {
template <typename T>
double dot(const T* a, const T* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t q = 0; q < n; ++q) acc += static_cast<double>(a[q]) * static_cast<double>(b[q]);
    return acc;
}
}  // namespace detail

/// One estimated feature: R^(k)_i . R^(s)_j.
template <typename T>
double projection_dot(const ProjectionSet<T>& ps, NodeId i, std::uint32_t k, NodeId j,
                      std::uint32_t s) {
    if (i >= ps.node_count() || j >= ps.node_count())
        throw ValidationError("node id out of range");
    return detail::dot(ps.matrices[k].row(i), ps.matrices[s].row(j), ps.dim());
}

/// Dot products R^(k)_i . R^(s)_i for k <= s, lexicographic in (k,s).
template <typename T>
std::vector<double> rp_node_features(const ProjectionSet<T>& ps, NodeId i) {
    if (i >= ps.node_count()) throw ValidationError("node id out of range");
    std::vector<double> out;
    out.reserve(node_feature_count(ps.max_power()));
    for (auto [k, s] : power_pairs_upper(ps.max_power()))
        out.push_back(detail::dot(ps.matrices[k].row(i), ps.matrices[s].row(i), ps.dim()));
    return out;
}

/// ii-block (k<=s), then ij-block (all k,s), then jj-block (k<=s).
template <typename T>
std::vector<double> rp_pair_features(const ProjectionSet<T>& ps, NodeId i, NodeId j) {
    if (i >= ps.node_count() || j >= ps.node_count())
        throw ValidationError("node id out of range");
    std::vector<double> out;
    out.reserve(pair_feature_count(ps.max_power()));
    for (auto [k, s] : power_pairs_upper(ps.max_power()))
        out.push_back(detail::dot(ps.matrices[k].row(i), ps.matrices[s].row(i), ps.dim()));
    for (auto [k, s] : power_pairs_all(ps.max_power()))
        out.push_back(detail::dot(ps.matrices[k].row(i), ps.matrices[s].row(j), ps.dim()));
    for (auto [k, s] : power_pairs_upper(ps.max_power()))
        out.push_back(detail::dot(ps.matrices[k].row(j), ps.matrices[s].row(j), ps.dim()));
    return out;
}

inline std::vector<std::string> node_feature_schema(std::uint32_t n) {
    std::vector<std::string> s;
    for (auto [k, q] : power_pairs_upper(n))
        s.push_back("F(" + std::to_string(k) + "," + std::to_string(q) + ")");
    return s;
}

inline std::vector<std::string> pair_feature_schema(std::uint32_t n) {
    std::vector<std::string> s;
    for (auto [k, q] : power_pairs_upper(n))
        s.push_back("Fii(" + std::to_string(k) + "," + std::to_string(q) + ")");
    for (auto [k, q] : power_pairs_all(n))
        s.push_back("Fij(" + std::to_string(k) + "," + std::to_string(q) + ")");
    for (auto [k, q] : power_pairs_upper(n))
        s.push_back("Fjj(" + std::to_string(k) + "," + std::to_string(q) + ")");
    return s;
}

// ---------------------------------------------------------------------------
// Exact reference values by dense row propagation. All reductions run in
// value order, so a node relabeling reproduces results bit for bit.
// ---------------------------------------------------------------------------

inline constexpr NodeId kDefaultDenseCap = 2000;

/// Rows e_i * A^k for k = 0..N.
inline std::vector<std::vector<double>> walk_rows(const TransitionMatrix& t, NodeId i,
                                                  std::uint32_t max_power) {
    std::vector<std::vector<double>> rows;
    std::vector<double> u(t.node_count, 0.0);
    u[i] = 1.0;
    rows.push_back(u);
    std::vector<std::pair<NodeId, double>> contrib;
    for (std::uint32_t k = 1; k <= max_power; ++k) {
        contrib.clear();
        for (NodeId r = 0; r < t.node_count; ++r) {
            if (u[r] == 0.0) continue;
            const auto cols = t.cols(r);
            const auto probs = t.probs(r);
            for (std::size_t e = 0; e < cols.size(); ++e)
                contrib.emplace_back(cols[e], u[r] * probs[e]);
        }
        std::sort(contrib.begin(), contrib.end());
        std::vector<double> next(t.node_count, 0.0);
        for (const auto& [c, v] : contrib) next[c] += v;
        u = std::move(next);
        rows.push_back(u);
    }
    return rows;
}

inline double ordered_dot(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> terms;
    for (std::size_t q = 0; q < a.size(); ++q)
        if (a[q] != 0.0 && b[q] != 0.0) terms.push_back(a[q] * b[q]);
    return ordered_sum(terms);
}

inline std::vector<double> oracle_node_features(const TransitionMatrix& t, NodeId i,
                                                std::uint32_t max_power,
                                                NodeId dense_cap = kDefaultDenseCap) {
    if (t.node_count > dense_cap) throw ValidationError("graph exceeds dense feature cap");
    if (i >= t.node_count) throw ValidationError("node id out of range");
    const auto rows = walk_rows(t, i, max_power);
    std::vector<double> out;
    for (auto [k, s] : power_pairs_upper(max_power)) out.push_back(ordered_dot(rows[k], rows[s]));
    return out;
}

/// Same ordering as rp_pair_features.
inline std::vector<double> oracle_features(const TransitionMatrix& t, NodeId i, NodeId j,
                                           std::uint32_t max_power,
                                           NodeId dense_cap = kDefaultDenseCap) {
    if (t.node_count > dense_cap) throw ValidationError("graph exceeds dense feature cap");
    if (i >= t.node_count || j >= t.node_count) throw ValidationError("node id out of range");
    const auto ri = walk_rows(t, i, max_power);
    const auto rj = walk_rows(t, j, max_power);
    std::vector<double> out;
    out.reserve(pair_feature_count(max_power));
    for (auto [k, s] : power_pairs_upper(max_power)) out.push_back(ordered_dot(ri[k], ri[s]));
    for (auto [k, s] : power_pairs_all(max_power)) out.push_back(ordered_dot(ri[k], rj[s]));
    for (auto [k, s] : power_pairs_upper(max_power)) out.push_back(ordered_dot(rj[k], rj[s]));
    return out;
}

// ---------------------------------------------------------------------------
// Invariant graph features: degree, PageRank, triangles, core number,
// largest clique through the node, egonet internal/boundary edge counts.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kIgfCount = 7;

inline const std::vector<std::string>& igf_schema() {
    static const std::vector<std::string> s = {"degree",     "pagerank",     "triangles",
                                               "core",       "clique",       "egonet_edges",
                                               "egonet_boundary"};
    return s;
}

/// PageRank with uniform teleport; mass at degree-0 nodes teleports.
inline std::vector<double> pagerank(const SparseGraph& g, double damping = 0.85,
                                    double tol = 1e-10, int max_iters = 10000) {
    const NodeId n = g.node_count;
    if (n == 0) return {};
    std::vector<double> x(n, 1.0 / n), next(n);
    std::vector<double> inv_deg(n, 0.0);
    for (NodeId i = 0; i < n; ++i) {
        const double d = g.weighted_degree(i);
        if (d > 0) inv_deg[i] = 1.0 / d;
    }
    for (int it = 0; it < max_iters; ++it) {
        double dangling = 0.0;
        for (NodeId i = 0; i < n; ++i)
            if (inv_deg[i] == 0.0) dangling += x[i];
        const double base = (1.0 - damping) / n + damping * dangling / n;
        std::fill(next.begin(), next.end(), base);
        for (NodeId i = 0; i < n; ++i) {
            if (inv_deg[i] == 0.0) continue;
            const double push = damping * x[i] * inv_deg[i];
            const auto cols = g.neighbors(i);
            const auto ws = g.weights(i);
            for (std::size_t e = 0; e < cols.size(); ++e) next[cols[e]] += push * ws[e];
        }
        double residual = 0.0;
        for (NodeId i = 0; i < n; ++i) residual += std::abs(next[i] - x[i]);
        x.swap(next);
        if (residual <= tol) break;
    }
    return x;
}

/// Core number for every node by iterative peeling.
inline std::vector<std::uint32_t> core_numbers(const SparseGraph& g) {
    const NodeId n = g.node_count;
    std::vector<std::uint32_t> deg(n, 0), core(n, 0);
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j : g.neighbors(i))
            if (j != i) ++deg[i];
    // bucket sort by degree, peel in ascending order
    const std::uint32_t maxd = n ? *std::max_element(deg.begin(), deg.end()) : 0;
    std::vector<std::vector<NodeId>> bucket(maxd + 1);
    for (NodeId i = 0; i < n; ++i) bucket[deg[i]].push_back(i);
    std::vector<std::uint8_t> removed(n, 0);
    std::vector<std::uint32_t> cur = deg;
    std::uint32_t level = 0;
    for (std::uint32_t d = 0; d <= maxd; ++d) {
        auto& q = bucket[d];
        for (std::size_t qi = 0; qi < q.size(); ++qi) {
            const NodeId v = q[qi];
            if (removed[v] || cur[v] > d) continue;
            level = std::max(level, cur[v]);
            core[v] = level;
            removed[v] = 1;
            for (NodeId u : g.neighbors(v)) {
                if (u == v || removed[u]) continue;
                if (cur[u] > cur[v]) {
                    --cur[u];
                    bucket[std::max(cur[u], d)].push_back(u);
                }
            }
        }
    }
    return core;
}

namespace detail {

/// Exact max clique size in the subgraph induced on `cand` (bitset over
/// local indices), by branch and bound with greedy coloring bound.
class CliqueSolver {
public:
    CliqueSolver(std::vector<std::vector<std::uint64_t>> adj, std::size_t n)
        : adj_(std::move(adj)), n_(n), words_((n + 63) / 64) {}

    std::size_t solve() {
        std::vector<std::uint64_t> cand(words_, 0);
        for (std::size_t i = 0; i < n_; ++i) cand[i / 64] |= std::uint64_t(1) << (i % 64);
        best_ = 0;
        expand(cand, 0);
        return best_;
    }

private:
    static std::size_t popcount(const std::vector<std::uint64_t>& b) {
        std::size_t c = 0;
        for (auto w : b) c += std::popcount(w);
        return c;
    }

    void expand(std::vector<std::uint64_t> cand, std::size_t depth) {
        if (depth + popcount(cand) <= best_) return;
        if (popcount(cand) == 0) {
            best_ = std::max(best_, depth);
            return;
        }
        // pick candidates in index order
        for (std::size_t w = 0; w < words_; ++w) {
            while (cand[w]) {
                if (depth + popcount(cand) <= best_) return;
                const int bit = std::countr_zero(cand[w]);
                const std::size_t v = w * 64 + bit;
                cand[w] &= ~(std::uint64_t(1) << bit);
                std::vector<std::uint64_t> next(words_);
                for (std::size_t q = 0; q < words_; ++q) next[q] = cand[q] & adj_[v][q];
                expand(std::move(next), depth + 1);
            }
        }
        best_ = std::max(best_, depth);
    }

    std::vector<std::vector<std::uint64_t>> adj_;
    std::size_t n_, words_;
    std::size_t best_ = 0;
};

}  // namespace detail

struct IgfOptions {
    double pagerank_damping = 0.85;
    double pagerank_tol = 1e-10;
    /// Above this egonet size the clique search falls back to a greedy
    /// lower bound and the row is flagged approximate.
    std::size_t clique_cap = 200;
};

/// Shared per-graph state for IGF rows.
struct IgfContext {
    const SparseGraph* graph;
    std::vector<double> rank;
    std::vector<std::uint32_t> core;
    IgfOptions options;

    explicit IgfContext(const SparseGraph& g, const IgfOptions& opts = {})
        : graph(&g), options(opts) {
        if (g.directed) throw ValidationError("invariant graph features need an undirected graph");
        rank = pagerank(g, opts.pagerank_damping, opts.pagerank_tol);
        core = core_numbers(g);
    }
};

struct IgfRow {
    std::array<double, kIgfCount> values;
    bool approximate = false;  // clique value is a lower bound only
};

inline IgfRow igf_row(const IgfContext& ctx, NodeId i) {
    const SparseGraph& g = *ctx.graph;
    if (i >= g.node_count) throw ValidationError("node id out of range");

    std::vector<NodeId> nbrs;
    for (NodeId j : g.neighbors(i))
        if (j != i) nbrs.push_back(j);
    const std::size_t deg = nbrs.size();

    std::size_t triangles = 0;
    for (std::size_t a = 0; a < nbrs.size(); ++a)
        for (std::size_t b = a + 1; b < nbrs.size(); ++b)
            if (g.has_edge(nbrs[a], nbrs[b])) ++triangles;

    // Largest clique containing i = 1 + max clique among its neighbors.
    IgfRow out;
    std::size_t clique;
    if (deg == 0) {
        clique = 1;
    } else if (deg <= ctx.options.clique_cap) {
        std::vector<std::vector<std::uint64_t>> adj(deg,
                                                    std::vector<std::uint64_t>((deg + 63) / 64, 0));
        for (std::size_t a = 0; a < deg; ++a)
            for (std::size_t b = 0; b < deg; ++b)
                if (a != b && g.has_edge(nbrs[a], nbrs[b])) adj[a][b / 64] |= std::uint64_t(1) << (b % 64);
        clique = 1 + detail::CliqueSolver(std::move(adj), deg).solve();
    } else {
        // greedy: repeatedly add the lowest-id neighbor adjacent to all chosen
        std::vector<NodeId> chosen;
        for (NodeId v : nbrs) {
            bool ok = true;
            for (NodeId u : chosen)
                if (!g.has_edge(u, v)) { ok = false; break; }
            if (ok) chosen.push_back(v);
        }
        clique = 1 + chosen.size();
        out.approximate = true;
    }

    // Egonet = i plus its neighbors; count inside edges and edges leaving.
    std::vector<std::uint8_t> in_ego(g.node_count, 0);
    in_ego[i] = 1;
    for (NodeId j : nbrs) in_ego[j] = 1;
    std::size_t internal2 = 0, boundary = 0;  // internal counted twice
    for (NodeId u = 0; u < g.node_count; ++u) {
        if (!in_ego[u]) continue;
        for (NodeId v : g.neighbors(u)) {
            if (v == u) continue;
            if (in_ego[v]) ++internal2;
            else ++boundary;
        }
    }

    out.values = {static_cast<double>(deg),
                  ctx.rank[i],
                  static_cast<double>(triangles),
                  static_cast<double>(ctx.core[i]),
                  static_cast<double>(clique),
                  static_cast<double>(internal2 / 2),
                  static_cast<double>(boundary)};
    return out;
}

/// One-off convenience; builds the shared context each call.
inline IgfRow igf_features(const SparseGraph& g, NodeId i, const IgfOptions& opts = {}) {
    return igf_row(IgfContext(g, opts), i);
}

// ---------------------------------------------------------------------------
// Rotation-invariant Gram features over externally supplied embeddings.
// ---------------------------------------------------------------------------

struct ExternalEmbeddings {
    std::size_t dim = 0;
    std::map<NodeId, std::vector<double>> in_vec;
    std::map<NodeId, std::vector<double>> out_vec;

    bool has_in(NodeId i) const { return in_vec.count(i) > 0; }
    bool has_out(NodeId i) const { return out_vec.count(i) > 0; }
};

/// `node_id<TAB>IN|OUT<TAB>v1 v2 ... vD` per line. Ids resolve through
/// `name_to_id` when given (graphs with interned string ids), else must
/// be numeric.
inline ExternalEmbeddings load_embeddings(
    const std::filesystem::path& path,
    const std::unordered_map<std::string, NodeId>* name_to_id = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings: " + path.string());
    ExternalEmbeddings emb;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id_tok, kind;
        if (!(ss >> id_tok >> kind))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected `id IN|OUT v1 ...`");
        NodeId id = 0;
        if (name_to_id) {
            auto it = name_to_id->find(id_tok);
            if (it == name_to_id->end())
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": unknown node id `" + id_tok + "`");
            id = it->second;
        } else {
            std::uint64_t v = 0;
            if (!detail::parse_u64(id_tok, v))
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": non-numeric node id `" + id_tok + "`");
            id = static_cast<NodeId>(v);
        }
        std::vector<double> vec;
        double x;
        while (ss >> x) vec.push_back(x);
        if (vec.empty())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": empty vector");
        if (emb.dim == 0) emb.dim = vec.size();
        if (vec.size() != emb.dim)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": vector length mismatch");
        if (kind == "IN") emb.in_vec[id] = std::move(vec);
        else if (kind == "OUT") emb.out_vec[id] = std::move(vec);
        else
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected IN or OUT, got `" + kind + "`");
    }
    return emb;
}

namespace detail {
inline double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) acc += a[q] * b[q];
    return acc;
}
}  // namespace detail

/// Single node: Gram entries of (x_i, y_i): x.x, x.y, y.y.
inline std::vector<double> ri_gram_features(const ExternalEmbeddings& emb, NodeId i) {
    if (!emb.has_in(i) || !emb.has_out(i))
        throw ValidationError("missing embedding vector for node " + std::to_string(i));
    const auto& x = emb.in_vec.at(i);
    const auto& y = emb.out_vec.at(i);
    return {detail::vdot(x, x), detail::vdot(x, y), detail::vdot(y, y)};
}

/// Pair: with both IN and OUT vectors present for i and j, the 10 dot
/// products over (x_i, y_i, x_j, y_j), upper triangle lexicographic.
/// With IN vectors only: x_i.x_i, x_i.x_j, x_j.x_j.
inline std::vector<double> ri_gram_features(const ExternalEmbeddings& emb, NodeId i, NodeId j) {
    if (!emb.has_in(i) || !emb.has_in(j))
        throw ValidationError("missing embedding vector for node " +
                              std::to_string(emb.has_in(i) ? j : i));
    if (emb.has_out(i) && emb.has_out(j)) {
        const std::array<const std::vector<double>*, 4> v = {
            &emb.in_vec.at(i), &emb.out_vec.at(i), &emb.in_vec.at(j), &emb.out_vec.at(j)};
        std::vector<double> out;
        out.reserve(10);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = a; b < 4; ++b) out.push_back(detail::vdot(*v[a], *v[b]));
        return out;
    }
    const auto& xi = emb.in_vec.at(i);
    const auto& xj = emb.in_vec.at(j);
    return {detail::vdot(xi, xi), detail::vdot(xi, xj), detail::vdot(xj, xj)};
}

inline std::vector<std::string> ri_gram_node_schema() { return {"g(xi.xi)", "g(xi.yi)", "g(yi.yi)"}; }

inline std::vector<std::string> ri_gram_pair_schema(bool with_out) {
    if (!with_out) return {"g(xi.xi)", "g(xi.xj)", "g(xj.xj)"};
    static const char* n[4] = {"xi", "yi", "xj", "yj"};
    std::vector<std::string> s;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a; b < 4; ++b)
            s.push_back(std::string("g(") + n[a] + "." + n[b] + ")");
    return s;
}

// ---------------------------------------------------------------------------
// FeatureTable: named columns, node or pair keys, provenance digest.
// ---------------------------------------------------------------------------

struct FeatureTable {
    std::vector<std::string> schema;
    bool pairwise = false;
    std::vector<std::array<NodeId, 2>> keys;  // [i, i] for node tables
    Matrix<double> values;                    // keys.size() x schema.size()
    std::string method;
    Digest source_digest;                      // upstream artifact digest
    std::vector<std::uint64_t> flagged_rows;  // approximate rows (sorted)

    std::size_t row_count() const { return keys.size(); }
};

/// Node features for every node of the projection set.
template <typename T>
FeatureTable rp_node_table(const ProjectionSet<T>& ps, unsigned threads = 1) {
    FeatureTable tb;
    tb.schema = node_feature_schema(ps.max_power());
    tb.method = "rp-dotprod/node";
    tb.source_digest = ps.graph_hash;
    const NodeId n = ps.node_count();
    tb.keys.resize(n);
    tb.values = Matrix<double>(n, tb.schema.size());
    parallel_for(n, threads, [&](std::size_t i) {
        tb.keys[i] = {static_cast<NodeId>(i), static_cast<NodeId>(i)};
        const auto f = rp_node_features(ps, static_cast<NodeId>(i));
        std::copy(f.begin(), f.end(), tb.values.row(i));
    });
    return tb;
}

template <typename T>
FeatureTable rp_pair_table(const ProjectionSet<T>& ps,
                           const std::vector<std::array<NodeId, 2>>& pairs,
                           unsigned threads = 1) {
    FeatureTable tb;
    tb.schema = pair_feature_schema(ps.max_power());
    tb.pairwise = true;
    tb.method = "rp-dotprod/pair";
    tb.source_digest = ps.graph_hash;
    tb.keys = pairs;
    tb.values = Matrix<double>(pairs.size(), tb.schema.size());
    parallel_for(pairs.size(), threads, [&](std::size_t r) {
        const auto f = rp_pair_features(ps, pairs[r][0], pairs[r][1]);
        std::copy(f.begin(), f.end(), tb.values.row(r));
    });
    return tb;
}

inline FeatureTable igf_table(const SparseGraph& g, const IgfOptions& opts = {},
                              unsigned threads = 1) {
    IgfContext ctx(g, opts);
    FeatureTable tb;
    tb.schema = igf_schema();
    tb.method = "igf";
    tb.source_digest = graph_digest(g);
    tb.keys.resize(g.node_count);
    tb.values = Matrix<double>(g.node_count, kIgfCount);
    std::vector<std::uint8_t> approx(g.node_count, 0);
    parallel_for(g.node_count, threads, [&](std::size_t i) {
        tb.keys[i] = {static_cast<NodeId>(i), static_cast<NodeId>(i)};
        const auto row = igf_row(ctx, static_cast<NodeId>(i));
        std::copy(row.values.begin(), row.values.end(), tb.values.row(i));
        approx[i] = row.approximate;
    });
    for (NodeId i = 0; i < g.node_count; ++i)
        if (approx[i]) tb.flagged_rows.push_back(i);
    return tb;
}

// ---------------------------------------------------------------------------
// Table persistence: CSV (header + rows) and the binary "FTB1" format
// (header, schema block, then key + f32 values per row; little-endian).
// ---------------------------------------------------------------------------

inline void write_table_csv(const FeatureTable& tb, const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write table: " + tmp.string());
        out << (tb.pairwise ? "i,j" : "i");
        for (const auto& name : tb.schema) out << ',' << name;
        out << '\n';
        char buf[64];
        for (std::size_t r = 0; r < tb.row_count(); ++r) {
            out << tb.keys[r][0];
            if (tb.pairwise) out << ',' << tb.keys[r][1];
            for (std::size_t c = 0; c < tb.schema.size(); ++c) {
                std::snprintf(buf, sizeof buf, "%.9g", tb.values(r, c));
                out << ',' << buf;
            }
            out << '\n';
        }
        if (!out) throw IoError("failed writing table: " + tmp.string());
    });
}

inline constexpr std::uint16_t kTableFormatVersion = 1;

inline void write_table_binary(const FeatureTable& tb, const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        BinaryWriter w(tmp);
        w.bytes("FTB1", 4);
        w.u16(kTableFormatVersion);
        w.u16(tb.pairwise ? 1 : 0);
        w.u64(tb.row_count());
        w.u32(static_cast<std::uint32_t>(tb.schema.size()));
        w.str(tb.method);
        w.bytes(tb.source_digest.bytes.data(), tb.source_digest.bytes.size());
        for (const auto& name : tb.schema) w.str(name);
        w.u64(tb.flagged_rows.size());
        for (auto r : tb.flagged_rows) w.u64(r);
        for (std::size_t r = 0; r < tb.row_count(); ++r) {
            w.u64(tb.keys[r][0]);
            if (tb.pairwise) w.u64(tb.keys[r][1]);
            for (std::size_t c = 0; c < tb.schema.size(); ++c)
                w.f32(static_cast<float>(tb.values(r, c)));
        }
        w.close();
    });
}

inline FeatureTable load_table_binary(const std::filesystem::path& path) {
    BinaryReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "FTB1")
        throw IoError("not a feature table (bad magic): " + path.string());
    if (r.u16() != kTableFormatVersion) throw IoError("unsupported table version");
    FeatureTable tb;
    tb.pairwise = r.u16() & 1;
    const std::uint64_t rows = r.u64();
    const std::uint32_t cols = r.u32();
    tb.method = r.str();
    r.bytes(tb.source_digest.bytes.data(), tb.source_digest.bytes.size());
    for (std::uint32_t c = 0; c < cols; ++c) tb.schema.push_back(r.str());
    const std::uint64_t nflag = r.u64();
    for (std::uint64_t k = 0; k < nflag; ++k) tb.flagged_rows.push_back(r.u64());
    tb.keys.resize(rows);
    tb.values = Matrix<double>(rows, cols);
    for (std::uint64_t row = 0; row < rows; ++row) {
        tb.keys[row][0] = static_cast<NodeId>(r.u64());
        tb.keys[row][1] = tb.pairwise ? static_cast<NodeId>(r.u64()) : tb.keys[row][0];
        for (std::uint32_t c = 0; c < cols; ++c) tb.values(row, c) = r.f32();
    }
    if (!r.at_eof()) throw IoError("trailing bytes in feature table: " + path.string());
    return tb;
}

}  // namespace rpgraph
