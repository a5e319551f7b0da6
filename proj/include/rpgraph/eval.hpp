#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"
#include "rpgraph/features.hpp"
#include "rpgraph/graph.hpp"
#include "rpgraph/io.hpp"
#include "rpgraph/nn.hpp"
#include "rpgraph/rng.hpp"
#include "rpgraph/rproj.hpp"

namespace rpgraph {

// ---------------------------------------------------------------------------
// Synthetic graphs
// ---------------------------------------------------------------------------

struct SbmSpec {
    std::vector<std::uint32_t> block_sizes;
    double p_intra = 0.1;
    double p_inter = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        if (block_sizes.size() < 2) throw ValidationError("sbm needs at least 2 blocks");
        if (!(p_intra >= 0 && p_intra <= 1 && p_inter >= 0 && p_inter <= 1))
            throw ValidationError("sbm probabilities must be in [0,1]");
    }
};

/// Undirected simple graph with planted blocks; labels are block ids.
inline std::pair<SparseGraph, std::vector<int>> generate_sbm(const SbmSpec& spec) {
    spec.validate();
    std::vector<int> labels;
    for (std::size_t b = 0; b < spec.block_sizes.size(); ++b)
        labels.insert(labels.end(), spec.block_sizes[b], static_cast<int>(b));
    const NodeId n = static_cast<NodeId>(labels.size());
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::tuple<NodeId, NodeId, double>> edges;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? spec.p_intra : spec.p_inter;
            if (unit(rng) < p) edges.emplace_back(i, j, 1.0);
        }
    return {make_graph(n, edges, /*directed=*/false), std::move(labels)};
}

/// Uniform simple graph with exactly `edge_count` undirected edges.
inline SparseGraph generate_er(NodeId n, std::size_t edge_count, std::uint64_t seed) {
    const std::size_t max_edges = std::size_t(n) * (n - 1) / 2;
    if (edge_count > max_edges) throw ValidationError("edge count exceeds complete graph");
    std::mt19937_64 rng(seed);
    std::set<std::pair<NodeId, NodeId>> seen;
    std::vector<std::tuple<NodeId, NodeId, double>> edges;
    std::uniform_int_distribution<NodeId> pick(0, n - 1);
    while (edges.size() < edge_count) {
        NodeId u = pick(rng), v = pick(rng);
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        if (seen.insert({u, v}).second) edges.emplace_back(u, v, 1.0);
    }
    return make_graph(n, edges, false);
}

// ---------------------------------------------------------------------------
// Pair sampling: balanced same/different class pairs, uniform over the
// eligible unordered pairs, with only the binary label exposed.
// ---------------------------------------------------------------------------

struct PairSample {
    NodeId i, j;
    int same;  // 1 = same class
};

inline std::vector<PairSample> make_pair_samples(const std::vector<int>& labels,
                                                 std::size_t count, std::uint64_t seed) {
    const NodeId n = static_cast<NodeId>(labels.size());
    std::map<int, std::size_t> freq;
    for (int y : labels)
        if (y >= 0) ++freq[y];
    if (freq.size() < 2)
        throw ValidationError("pair sampling needs at least 2 distinct labels");

    std::vector<std::pair<NodeId, NodeId>> same, diff;
    for (NodeId i = 0; i < n; ++i) {
        if (labels[i] < 0) continue;
        for (NodeId j = i + 1; j < n; ++j) {
            if (labels[j] < 0) continue;
            (labels[i] == labels[j] ? same : diff).push_back({i, j});
        }
    }
    if (same.empty() || diff.empty())
        throw ValidationError("pair sampling needs both same- and different-class pairs");

    std::mt19937_64 rng(seed);
    std::vector<PairSample> out;
    out.reserve(count);
    const std::size_t n_same = count / 2;
    std::uniform_int_distribution<std::size_t> ps(0, same.size() - 1);
    std::uniform_int_distribution<std::size_t> pd(0, diff.size() - 1);
    for (std::size_t k = 0; k < n_same; ++k) {
        const auto& e = same[ps(rng)];
        out.push_back({e.first, e.second, 1});
    }
    for (std::size_t k = n_same; k < count; ++k) {
        const auto& e = diff[pd(rng)];
        out.push_back({e.first, e.second, 0});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double metric_accuracy(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw ValidationError("accuracy needs matching nonempty arrays");
    std::size_t hit = 0;
    for (std::size_t k = 0; k < predicted.size(); ++k)
        if (predicted[k] == actual[k]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

/// Mann-Whitney AUC; tied scores contribute 1/2 via midranks.
inline double metric_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw ValidationError("auc needs matching nonempty arrays");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auc needs both classes present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t at = 0;
    while (at < order.size()) {
        std::size_t hi = at + 1;
        while (hi < order.size() && scores[order[hi]] == scores[order[at]]) ++hi;
        const double midrank = 0.5 * static_cast<double>(at + 1 + hi);  // ranks are 1-based
        for (std::size_t k = at; k < hi; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        at = hi;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Group rows by predicted label, give each group the most frequent true
/// label (ties to the smallest), then score plain accuracy.
inline double metric_mapped_accuracy(const std::vector<int>& predicted,
                                     const std::vector<int>& actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw ValidationError("mapped accuracy needs matching nonempty arrays");
    std::map<int, std::map<int, std::size_t>> groups;
    for (std::size_t k = 0; k < predicted.size(); ++k) ++groups[predicted[k]][actual[k]];
    std::size_t hit = 0;
    for (const auto& [pred, counts] : groups) {
        std::size_t best = 0;
        for (const auto& [label, c] : counts) best = std::max(best, c);
        hit += best;
    }
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

/// Accuracy of the best constant prediction on these labels.
inline double majority_frequency(const std::vector<int>& labels) {
    if (labels.empty()) throw ValidationError("empty label array");
    std::map<int, std::size_t> freq;
    for (int y : labels) ++freq[y];
    std::size_t best = 0;
    for (const auto& [label, c] : freq) best = std::max(best, c);
    return static_cast<double>(best) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Feature standardization (constants from training graphs only)
// ---------------------------------------------------------------------------

struct Standardizer {
    std::vector<double> mean, scale;

    void fit(const Matrix<double>& rows) {
        const std::size_t n = rows.rows(), c = rows.cols();
        mean.assign(c, 0.0);
        scale.assign(c, 1.0);
        if (n == 0) return;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t q = 0; q < c; ++q) mean[q] += rows(r, q);
        for (auto& v : mean) v /= static_cast<double>(n);
        std::vector<double> var(c, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t q = 0; q < c; ++q) {
                const double d = rows(r, q) - mean[q];
                var[q] += d * d;
            }
        for (std::size_t q = 0; q < c; ++q) {
            const double sd = std::sqrt(var[q] / static_cast<double>(n));
            scale[q] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }

    template <typename R>
    Matrix<R> apply_row(const double* row, std::size_t c) const {
        Matrix<R> out(1, c);
        for (std::size_t q = 0; q < c; ++q)
            out(0, q) = static_cast<R>((row[q] - mean[q]) * scale[q]);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Label files: `node_id<TAB>label`, label tokens interned into a shared
// vocabulary so classes line up across graphs.
// ---------------------------------------------------------------------------

struct LabelVocab {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> index;

    int intern(const std::string& tok) {
        auto it = index.find(tok);
        if (it != index.end()) return it->second;
        const int id = static_cast<int>(names.size());
        names.push_back(tok);
        index.emplace(tok, id);
        return id;
    }
};

/// Returns one label per node, -1 where the file gave none.
inline std::vector<int> load_labels(const std::filesystem::path& path, const SparseGraph& g,
                                    LabelVocab& vocab) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open labels: " + path.string());
    std::unordered_map<std::string, NodeId> name_to_id;
    if (!g.id_names.empty())
        for (NodeId i = 0; i < g.node_count; ++i) name_to_id[g.id_names[i]] = i;

    std::vector<int> labels(g.node_count, -1);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id_tok, label_tok;
        if (!(ss >> id_tok >> label_tok))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected `node_id label`");
        NodeId id = 0;
        if (!g.id_names.empty()) {
            auto it = name_to_id.find(id_tok);
            if (it == name_to_id.end()) continue;  // label for a node absent from the graph
            id = it->second;
        } else {
            std::uint64_t v = 0;
            if (!detail::parse_u64(id_tok, v))
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": non-numeric node id `" + id_tok + "`");
            if (v >= g.node_count) continue;
            id = static_cast<NodeId>(v);
        }
        labels[id] = vocab.intern(label_tok);
    }
    return labels;
}

inline void write_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write labels: " + tmp.string());
        for (std::size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
        if (!out) throw IoError("failed writing labels: " + tmp.string());
    });
}

// ---------------------------------------------------------------------------
// Experiment description
// ---------------------------------------------------------------------------

enum class Task : std::uint8_t { NodeClass, PairSameClass };
enum class Method : std::uint8_t { RpDotProd, RpConvNet, Igf, RiGram, Ensemble };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::RpDotProd: return "rp-dotprod";
        case Method::RpConvNet: return "rp-convnet";
        case Method::Igf: return "igf";
        case Method::RiGram: return "ri-gram";
        case Method::Ensemble: return "rp-dotprod+igf";
    }
    return "?";
}

struct GraphSource {
    std::string name;
    std::filesystem::path edges;   // either edges+labels ...
    std::filesystem::path labels;
    LoadOptions load;
    std::optional<SbmSpec> sbm;    // ... or a generated block-model graph
    std::optional<std::filesystem::path> embeddings;  // ri-gram input
};

struct MetricCheck {
    std::string metric;
    double threshold;  // pass iff equal-weight mean >= threshold
};

struct ExperimentSpec {
    std::vector<GraphSource> train_graphs, test_graphs;
    Task task = Task::NodeClass;
    Method method = Method::RpDotProd;
    ProjectionConfig projection;
    std::vector<std::size_t> hidden = {128, 128};
    ConvNetSpec convnet;
    TrainConfig train_config;
    double val_fraction = 0.2;
    std::uint32_t pairs_per_node = 10;
    std::vector<std::uint64_t> seeds = {1};
    bool diagnostic = false;  // permit train graph == test graph
    std::vector<MetricCheck> checks;

    void validate() const {
        if (train_graphs.empty() || test_graphs.empty())
            throw ValidationError("experiment needs at least one train and one test graph");
        if (seeds.empty()) throw ValidationError("experiment needs at least one seed");
        if (!(val_fraction > 0 && val_fraction < 1))
            throw ValidationError("validation fraction must be in (0,1)");
    }
};

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ReportCell {
    std::string graph;
    std::size_t nodes = 0;
    std::map<std::string, double> metrics;
    std::string error;  // nonempty = this cell failed, run continues
};

struct Report {
    std::string task, method;
    std::vector<std::string> metric_names;
    std::vector<ReportCell> cells;
    std::map<std::string, double> equal_mean, weighted_mean;
    std::vector<std::pair<MetricCheck, bool>> check_results;

    std::string to_csv() const {
        std::ostringstream out;
        out << "graph,nodes";
        for (const auto& m : metric_names) out << ',' << m;
        out << '\n';
        char buf[64];
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.9g", v);
            out << ',' << buf;
        };
        for (const auto& c : cells) {
            out << c.graph << ',' << c.nodes;
            if (!c.error.empty()) {
                for (std::size_t k = 0; k < metric_names.size(); ++k) out << ",error";
            } else {
                for (const auto& m : metric_names) put(c.metrics.at(m));
            }
            out << '\n';
        }
        out << "mean(equal),";
        for (const auto& m : metric_names) put(equal_mean.at(m));
        out << "\nmean(weighted),";
        for (const auto& m : metric_names) put(weighted_mean.at(m));
        out << '\n';
        return out.str();
    }

    std::string to_markdown() const {
        std::ostringstream out;
        out << "# Cross-graph evaluation: " << method << " / " << task << "\n\n";
        out << "| graph | nodes |";
        for (const auto& m : metric_names) out << ' ' << m << " |";
        out << "\n|---|---|";
        for (std::size_t k = 0; k < metric_names.size(); ++k) out << "---|";
        out << '\n';
        char buf[64];
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.4f", v);
            out << ' ' << buf << " |";
        };
        for (const auto& c : cells) {
            out << "| " << c.graph << " | " << c.nodes << " |";
            if (!c.error.empty())
                for (std::size_t k = 0; k < metric_names.size(); ++k) out << " error |";
            else
                for (const auto& m : metric_names) put(c.metrics.at(m));
            out << '\n';
        }
        out << "| mean (equal weight) | |";
        for (const auto& m : metric_names) put(equal_mean.at(m));
        out << "\n| mean (weighted by nodes) | |";
        for (const auto& m : metric_names) put(weighted_mean.at(m));
        out << '\n';
        if (!check_results.empty()) {
            out << "\n## Checks\n\n";
            for (const auto& [check, ok] : check_results)
                out << "- " << (ok ? "PASS" : "FAIL") << ": mean " << check.metric
                    << " >= " << check.threshold << '\n';
        }
        return out.str();
    }

    Digest digest() const { return sha256(to_csv()); }

    bool checks_passed() const {
        for (const auto& [c, ok] : check_results)
            if (!ok) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// The harness
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedGraph {
    std::string name;
    SparseGraph graph;
    std::vector<int> labels;
    std::optional<ExternalEmbeddings> embeddings;
    Digest digest;
};

inline LoadedGraph load_source(const GraphSource& src, LabelVocab& vocab) {
    LoadedGraph out;
    out.name = src.name;
    if (src.sbm) {
        auto [g, labels] = generate_sbm(*src.sbm);
        out.graph = std::move(g);
        out.labels.reserve(labels.size());
        for (int b : labels) out.labels.push_back(vocab.intern(std::to_string(b)));
    } else {
        out.graph = load_edge_list(src.edges, src.load);
        out.labels = load_labels(src.labels, out.graph, vocab);
    }
    if (src.embeddings) out.embeddings = load_embeddings(*src.embeddings);
    out.digest = graph_digest(out.graph);
    return out;
}

/// Feature rows plus labels for one graph under one method/task/seed.
struct GraphSamples {
    Matrix<double> features;       // empty for the convnet path
    std::vector<Matrix<float>> raw;  // convnet inputs
    std::vector<int> labels;
};

inline GraphSamples build_samples(const LoadedGraph& lg, Task task, Method method,
                                  const ProjectionConfig& proj_template, std::uint64_t seed,
                                  std::uint32_t pairs_per_node, unsigned threads) {
    GraphSamples out;
    const bool needs_projection =
        method == Method::RpDotProd || method == Method::RpConvNet || method == Method::Ensemble;

    ProjectionSet<float> ps;
    if (needs_projection) {
        ProjectionConfig cfg = proj_template;
        cfg.seed = seed;
        PropagateOptions opts;
        opts.threads = threads;
        ps = propagate<float>(transition_matrix(lg.graph), cfg, opts);
    }
    std::optional<IgfContext> igf;
    if (method == Method::Igf || method == Method::Ensemble) igf.emplace(lg.graph);

    auto igf_vec = [&](NodeId i) {
        const auto row = igf_row(*igf, i);
        return std::vector<double>(row.values.begin(), row.values.end());
    };

    if (task == Task::NodeClass) {
        std::vector<NodeId> nodes;
        for (NodeId i = 0; i < lg.graph.node_count; ++i)
            if (lg.labels[i] >= 0) nodes.push_back(i);
        if (method == Method::RpConvNet) {
            for (NodeId i : nodes) {
                out.raw.push_back(build_convnet_input<float>(ps, i));
                out.labels.push_back(lg.labels[i]);
            }
            return out;
        }
        std::vector<std::vector<double>> rows(nodes.size());
        parallel_for(nodes.size(), threads, [&](std::size_t k) {
            const NodeId i = nodes[k];
            switch (method) {
                case Method::RpDotProd: rows[k] = rp_node_features(ps, i); break;
                case Method::Igf: rows[k] = igf_vec(i); break;
                case Method::RiGram: rows[k] = ri_gram_features(*lg.embeddings, i); break;
                case Method::Ensemble: {
                    rows[k] = rp_node_features(ps, i);
                    const auto extra = igf_vec(i);
                    rows[k].insert(rows[k].end(), extra.begin(), extra.end());
                    break;
                }
                default: break;
            }
        });
        out.features = Matrix<double>(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            std::copy(rows[k].begin(), rows[k].end(), out.features.row(k));
            out.labels.push_back(lg.labels[nodes[k]]);
        }
        return out;
    }

    // pairwise same-class task
    const auto samples = make_pair_samples(lg.labels, std::size_t(pairs_per_node) * lg.graph.node_count,
                                           derive_seed(seed, 0x70a1u));
    if (method == Method::RpConvNet) {
        for (const auto& s : samples) {
            out.raw.push_back(build_convnet_input<float>(ps, s.i, s.j));
            out.labels.push_back(s.same);
        }
        return out;
    }
    std::vector<std::vector<double>> rows(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t k) {
        const auto& s = samples[k];
        switch (method) {
            case Method::RpDotProd: rows[k] = rp_pair_features(ps, s.i, s.j); break;
            case Method::Igf: {
                rows[k] = igf_vec(s.i);
                const auto extra = igf_vec(s.j);
                rows[k].insert(rows[k].end(), extra.begin(), extra.end());
                break;
            }
            case Method::RiGram: rows[k] = ri_gram_features(*lg.embeddings, s.i, s.j); break;
            case Method::Ensemble: {
                rows[k] = rp_pair_features(ps, s.i, s.j);
                auto extra = igf_vec(s.i);
                const auto ej = igf_vec(s.j);
                extra.insert(extra.end(), ej.begin(), ej.end());
                rows[k].insert(rows[k].end(), extra.begin(), extra.end());
                break;
            }
            default: break;
        }
    });
    out.features = Matrix<double>(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        std::copy(rows[k].begin(), rows[k].end(), out.features.row(k));
        out.labels.push_back(samples[k].same);
    }
    return out;
}

}  // namespace detail

/// Per-seed, per-test-graph metric values from one full train/evaluate
/// pass. Validation is split from the pooled training graphs only.
struct SeedOutcome {
    struct Cell {
        std::map<std::string, double> metrics;
        std::string error;  // nonempty = this graph failed this seed
    };
    std::vector<Cell> per_test_graph;
};

inline SeedOutcome run_seed(const ExperimentSpec& spec,
                            const std::vector<detail::LoadedGraph>& train_inputs,
                            const std::vector<detail::LoadedGraph>& test_inputs,
                            std::uint64_t seed, int n_classes, unsigned threads) {
    const bool convnet = spec.method == Method::RpConvNet;
    const LossKind loss =
        spec.task == Task::NodeClass ? LossKind::SoftmaxCrossEntropy : LossKind::BinaryCrossEntropy;

    // Assemble the pooled training set.
    std::vector<Matrix<double>> feature_rows_owner;
    Dataset<float> pool;
    Matrix<double> pooled_features;
    {
        std::vector<detail::GraphSamples> per_graph;
        std::size_t total = 0, width = 0;
        for (std::size_t gi = 0; gi < train_inputs.size(); ++gi) {
            per_graph.push_back(detail::build_samples(train_inputs[gi], spec.task, spec.method,
                                                      spec.projection, derive_seed(seed, gi),
                                                      spec.pairs_per_node, threads));
            total += per_graph.back().labels.size();
            if (!convnet) width = per_graph.back().features.cols();
        }
        if (convnet) {
            for (auto& gs : per_graph) {
                for (auto& x : gs.raw) pool.inputs.push_back(std::move(x));
                pool.labels.insert(pool.labels.end(), gs.labels.begin(), gs.labels.end());
            }
        } else {
            pooled_features = Matrix<double>(total, width);
            std::size_t at = 0;
            for (auto& gs : per_graph) {
                for (std::size_t r = 0; r < gs.labels.size(); ++r, ++at)
                    std::copy(gs.features.row(r), gs.features.row(r) + width,
                              pooled_features.row(at));
                pool.labels.insert(pool.labels.end(), gs.labels.begin(), gs.labels.end());
            }
        }
    }
    if (pool.labels.empty()) throw ValidationError("no labeled training samples");

    // Standardize feature paths with training-pool constants.
    Standardizer scaler;
    if (!convnet) {
        scaler.fit(pooled_features);
        pool.inputs.reserve(pooled_features.rows());
        for (std::size_t r = 0; r < pooled_features.rows(); ++r)
            pool.inputs.push_back(
                scaler.apply_row<float>(pooled_features.row(r), pooled_features.cols()));
    }

    // Validation split out of the pool.
    std::vector<std::size_t> order(pool.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, 0x5a11du));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val = static_cast<std::size_t>(spec.val_fraction * order.size());
    Dataset<float> train_set, val_set;
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& dst = k < n_val ? val_set : train_set;
        dst.inputs.push_back(std::move(pool.inputs[order[k]]));
        dst.labels.push_back(pool.labels[order[k]]);
    }
    if (train_set.inputs.empty()) throw ValidationError("validation split consumed every sample");

    // Model
    const std::size_t outputs = spec.task == Task::NodeClass ? n_classes : 1;
    const std::size_t in_width = convnet ? (spec.task == Task::NodeClass
                                                ? spec.projection.max_power + 1
                                                : 2 * (spec.projection.max_power + 1))
                                         : train_set.inputs[0].cols();
    Model<float> model = convnet ? make_convnet<float>(in_width, spec.convnet, outputs,
                                                       derive_seed(seed, 0x90d31u))
                                 : make_fcn<float>(in_width, spec.hidden, outputs,
                                                   derive_seed(seed, 0x90d31u));
    TrainConfig cfg = spec.train_config;
    cfg.loss = loss;
    cfg.seed = derive_seed(seed, 0x7321au);
    const auto trained = train(std::move(model), train_set, val_set, cfg);

    // Score each test graph; one bad graph marks its cell, not the run.
    SeedOutcome outcome;
    for (std::size_t gi = 0; gi < test_inputs.size(); ++gi) {
        SeedOutcome::Cell cell;
        try {
            const auto gs = detail::build_samples(test_inputs[gi], spec.task, spec.method,
                                                  spec.projection,
                                                  derive_seed(seed, 0x1000u + gi),
                                                  spec.pairs_per_node, threads);
            std::vector<int> predicted;
            std::vector<double> scores;
            for (std::size_t r = 0; r < gs.labels.size(); ++r) {
                Matrix<float> x = convnet ? gs.raw[r]
                                          : scaler.apply_row<float>(gs.features.row(r),
                                                                    gs.features.cols());
                const auto out = trained.model.forward(x);
                predicted.push_back(predict_label(loss, out));
                if (spec.task == Task::PairSameClass)
                    scores.push_back(static_cast<double>(out(0, 0)));
            }
            cell.metrics["baseline"] = majority_frequency(gs.labels);
            cell.metrics["accuracy"] = metric_accuracy(predicted, gs.labels);
            if (spec.task == Task::NodeClass)
                cell.metrics["mapped_accuracy"] = metric_mapped_accuracy(predicted, gs.labels);
            else
                cell.metrics["auc"] = metric_auc(scores, gs.labels);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        outcome.per_test_graph.push_back(std::move(cell));
    }
    return outcome;
}

/// Full experiment: load everything once, run every seed, average per
/// test graph, and attach equal/size-weighted means plus check results.
inline Report evaluate(const ExperimentSpec& spec, unsigned threads = 1) {
    spec.validate();
    LabelVocab vocab;
    std::vector<detail::LoadedGraph> train, test;
    for (const auto& src : spec.train_graphs) train.push_back(detail::load_source(src, vocab));
    for (const auto& src : spec.test_graphs) test.push_back(detail::load_source(src, vocab));

    if (!spec.diagnostic) {
        for (const auto& te : test)
            for (const auto& tr : train)
                if (te.digest == tr.digest)
                    throw ValidationError("test graph `" + te.name +
                                          "` also appears in the training set");
    }
    int n_classes = static_cast<int>(vocab.names.size());
    if (spec.task == Task::NodeClass && n_classes < 2)
        throw ValidationError("node classification needs at least 2 classes");

    Report report;
    report.task = spec.task == Task::NodeClass ? "node-class" : "pair-same-class";
    report.method = to_string(spec.method);
    report.metric_names = spec.task == Task::NodeClass
                              ? std::vector<std::string>{"baseline", "accuracy", "mapped_accuracy"}
                              : std::vector<std::string>{"baseline", "accuracy", "auc"};

    std::vector<std::map<std::string, double>> sums(test.size());
    std::vector<std::size_t> counts(test.size(), 0);
    std::vector<std::string> errors(test.size());
    for (const std::uint64_t seed : spec.seeds) {
        try {
            const auto outcome = run_seed(spec, train, test, seed, n_classes, threads);
            for (std::size_t gi = 0; gi < test.size(); ++gi) {
                const auto& cell = outcome.per_test_graph[gi];
                if (!cell.error.empty()) {
                    if (errors[gi].empty()) errors[gi] = cell.error;
                    continue;
                }
                for (const auto& [k, v] : cell.metrics) sums[gi][k] += v;
                ++counts[gi];
            }
        } catch (const std::exception& e) {
            // training itself failed; every cell of this seed is affected
            for (std::size_t gi = 0; gi < test.size(); ++gi)
                if (errors[gi].empty()) errors[gi] = e.what();
        }
    }

    for (std::size_t gi = 0; gi < test.size(); ++gi) {
        ReportCell cell;
        cell.graph = test[gi].name;
        cell.nodes = test[gi].graph.node_count;
        if (counts[gi] == 0) {
            cell.error = errors[gi].empty() ? "no successful seed" : errors[gi];
        } else {
            for (const auto& [k, v] : sums[gi])
                cell.metrics[k] = v / static_cast<double>(counts[gi]);
        }
        report.cells.push_back(std::move(cell));
    }

    double total_nodes = 0;
    std::size_t ok_cells = 0;
    for (const auto& c : report.cells)
        if (c.error.empty()) {
            total_nodes += static_cast<double>(c.nodes);
            ++ok_cells;
        }
    for (const auto& m : report.metric_names) {
        double eq = 0, wt = 0;
        for (const auto& c : report.cells) {
            if (!c.error.empty()) continue;
            eq += c.metrics.at(m);
            wt += c.metrics.at(m) * static_cast<double>(c.nodes);
        }
        report.equal_mean[m] = ok_cells ? eq / static_cast<double>(ok_cells) : 0.0;
        report.weighted_mean[m] = total_nodes > 0 ? wt / total_nodes : 0.0;
    }
    for (const auto& check : spec.checks) {
        const auto it = report.equal_mean.find(check.metric);
        const bool ok = it != report.equal_mean.end() && it->second >= check.threshold;
        report.check_results.emplace_back(check, ok);
    }
    return report;
}

}  // namespace rpgraph
