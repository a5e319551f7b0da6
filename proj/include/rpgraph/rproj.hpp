#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"
#include "rpgraph/graph.hpp"
#include "rpgraph/io.hpp"
#include "rpgraph/rng.hpp"

namespace rpgraph {

enum class InitKind : std::uint8_t {
    Gaussian = 0,  // N(0, 1/D) per entry
    Sparse = 1,    // +-sqrt(s) w.p. 1/(2s) each, else 0
    Identity = 2,  // unit basis rows; test hook, requires dim == |V|
};

struct ProjectionConfig {
    std::uint32_t dim = 128;
    std::uint32_t max_power = 10;
    InitKind init = InitKind::Gaussian;
    unsigned sparse_s = 3;
    bool degree_normalize = false;
    double beta = -0.9;
    std::uint64_t seed = 0;

    void validate() const {
        if (dim < 1) throw ValidationError("projection dim must be >= 1");
        if (init == InitKind::Sparse && sparse_s < 1)
            throw ValidationError("sparse init needs s >= 1");
    }
};

/// The stack R^(0)..R^(N) with R^(k) = A * R^(k-1); row i of R^(k) is the
/// projected k-step walk distribution from node i.
template <typename T = float>
struct ProjectionSet {
    std::vector<Matrix<T>> matrices;  // max_power + 1 entries, |V| x dim
    ProjectionConfig config;
    Digest graph_hash;  // digest of the transition matrix propagated through

    std::uint32_t dim() const { return config.dim; }
    std::uint32_t max_power() const { return config.max_power; }
    NodeId node_count() const {
        return matrices.empty() ? 0 : static_cast<NodeId>(matrices[0].rows());
    }
};

/// Draw R^(0). Entry (i,p) depends only on (seed, i, p); when degree
/// normalization is on, row i is pre-scaled by (d_i / 2m)^beta computed
/// from `degree_source`.
template <typename T = float>
Matrix<T> init_projection(NodeId node_count, const ProjectionConfig& config,
                          const SparseGraph* degree_source = nullptr) {
    config.validate();
    if (config.init == InitKind::Identity && config.dim != node_count)
        throw ValidationError("identity init requires dim == node count");
    if (config.degree_normalize && degree_source == nullptr)
        throw ValidationError("degree normalization needs the source graph");

    std::vector<double> row_scale;
    if (config.degree_normalize) {
        std::vector<double> all(degree_source->weight.begin(), degree_source->weight.end());
        const double total = ordered_sum(all);  // = 2m for undirected graphs
        row_scale.resize(node_count);
        for (NodeId i = 0; i < node_count; ++i) {
            const double d = degree_source->weighted_degree(i);
            row_scale[i] = d > 0 ? std::pow(d / total, config.beta) : 1.0;
        }
    }

    Matrix<T> r(node_count, config.dim);
    const double sigma = std::sqrt(1.0 / config.dim);
    for (NodeId i = 0; i < node_count; ++i) {
        T* row = r.row(i);
        for (std::uint32_t p = 0; p < config.dim; ++p) {
            double v = 0.0;
            switch (config.init) {
                case InitKind::Gaussian:
                    v = sigma * counter_rng::normal(config.seed, i, p);
                    break;
                case InitKind::Sparse:
                    v = counter_rng::ternary(config.seed, i, p, config.sparse_s);
                    break;
                case InitKind::Identity:
                    v = (i == p) ? 1.0 : 0.0;
                    break;
            }
            if (!row_scale.empty()) v *= row_scale[i];
            row[p] = static_cast<T>(v);
        }
    }
    return r;
}

/// One chain step: out = A * in, row-parallel. Each output row is a
/// weighted sum of input rows accumulated in double.
template <typename T>
Matrix<T> chain_step(const TransitionMatrix& t, const Matrix<T>& in, unsigned threads = 1) {
    const std::size_t d = in.cols();
    Matrix<T> out(in.rows(), d);
    parallel_for(t.node_count, threads, [&](std::size_t i) {
        std::vector<double> acc(d, 0.0);
        const auto cols = t.cols(static_cast<NodeId>(i));
        const auto probs = t.probs(static_cast<NodeId>(i));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const T* src = in.row(cols[k]);
            const double p = probs[k];
            for (std::size_t q = 0; q < d; ++q) acc[q] += p * static_cast<double>(src[q]);
        }
        T* dst = out.row(i);
        for (std::size_t q = 0; q < d; ++q) dst[q] = static_cast<T>(acc[q]);
    });
    return out;
}

struct PropagateOptions {
    unsigned threads = 1;
    std::uint64_t memory_budget = std::uint64_t(4) << 30;
    const SparseGraph* degree_source = nullptr;  // required iff degree_normalize
};

namespace detail {
template <typename T>
void check_budget(NodeId n, std::uint32_t dim, std::uint32_t max_power, std::uint64_t budget) {
    const std::uint64_t required =
        std::uint64_t(max_power + 1) * n * dim * sizeof(T);
    if (required > budget)
        throw ValidationError("projection stack needs " + std::to_string(required) +
                              " bytes, over the " + std::to_string(budget) + " byte budget");
}
}  // namespace detail

/// Chain-multiply a caller-supplied R^(0) through the transition matrix.
template <typename T>
ProjectionSet<T> propagate_from(const TransitionMatrix& t, Matrix<T> r0,
                                const ProjectionConfig& config,
                                const PropagateOptions& opts = {}) {
    detail::check_budget<T>(t.node_count, static_cast<std::uint32_t>(r0.cols()),
                            config.max_power, opts.memory_budget);
    ProjectionSet<T> ps;
    ps.config = config;
    ps.graph_hash = transition_digest(t);
    ps.matrices.reserve(config.max_power + 1);
    ps.matrices.push_back(std::move(r0));
    for (std::uint32_t k = 1; k <= config.max_power; ++k)
        ps.matrices.push_back(chain_step(t, ps.matrices.back(), opts.threads));
    return ps;
}

template <typename T = float>
ProjectionSet<T> propagate(const TransitionMatrix& t, const ProjectionConfig& config,
                           const PropagateOptions& opts = {}) {
    config.validate();
    detail::check_budget<T>(t.node_count, config.dim, config.max_power, opts.memory_budget);
    return propagate_from<T>(t, init_projection<T>(t.node_count, config, opts.degree_source),
                             config, opts);
}

// ---------------------------------------------------------------------------
// Projection file: magic "RPJ1", version u16, flags u16, |V| u64, dim u32,
// max_power u32, seed u64, init kind u8, beta f64, transition digest (32
// bytes), then (max_power+1) row-major f32 matrices. Little-endian.
// Flag bit 0: degree normalization; bits 4..15: sparse s.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kProjectionFormatVersion = 1;

inline void save_projections(const ProjectionSet<float>& ps, const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        BinaryWriter w(tmp);
        w.bytes("RPJ1", 4);
        w.u16(kProjectionFormatVersion);
        std::uint16_t flags = ps.config.degree_normalize ? 1 : 0;
        if (ps.config.init == InitKind::Sparse)
            flags |= static_cast<std::uint16_t>(std::min(ps.config.sparse_s, 4095u) << 4);
        w.u16(flags);
        w.u64(ps.node_count());
        w.u32(ps.config.dim);
        w.u32(ps.config.max_power);
        w.u64(ps.config.seed);
        w.u8(static_cast<std::uint8_t>(ps.config.init));
        w.f64(ps.config.beta);
        w.bytes(ps.graph_hash.bytes.data(), ps.graph_hash.bytes.size());
        for (const auto& m : ps.matrices) w.f32_array(m.data().data(), m.size());
        w.close();
    });
}

struct LoadResult {
    ProjectionSet<float> projections;
    bool digest_mismatch = false;  // set when `expected` was given and differs
};

inline LoadResult load_projections(const std::filesystem::path& path,
                                   const Digest* expected = nullptr) {
    BinaryReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "RPJ1")
        throw IoError("not a projection file (bad magic): " + path.string());
    const std::uint16_t version = r.u16();
    if (version != kProjectionFormatVersion)
        throw IoError("unsupported projection file version " + std::to_string(version));
    const std::uint16_t flags = r.u16();
    const std::uint64_t n = r.u64();
    LoadResult out;
    auto& ps = out.projections;
    ps.config.dim = r.u32();
    ps.config.max_power = r.u32();
    ps.config.seed = r.u64();
    ps.config.init = static_cast<InitKind>(r.u8());
    ps.config.beta = r.f64();
    ps.config.degree_normalize = flags & 1;
    ps.config.sparse_s = flags >> 4;
    r.bytes(ps.graph_hash.bytes.data(), ps.graph_hash.bytes.size());
    ps.matrices.reserve(ps.config.max_power + 1);
    for (std::uint32_t k = 0; k <= ps.config.max_power; ++k) {
        Matrix<float> m(static_cast<std::size_t>(n), ps.config.dim);
        r.f32_array(m.data().data(), m.size());
        ps.matrices.push_back(std::move(m));
    }
    if (!r.at_eof()) throw IoError("trailing bytes in projection file: " + path.string());
    if (expected && !(*expected == ps.graph_hash)) out.digest_mismatch = true;
    return out;
}

}  // namespace rpgraph
