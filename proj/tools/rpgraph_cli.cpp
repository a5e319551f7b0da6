// Command-line front end: project / features / train / eval / oracle-check /
// gen-sbm. Every run is deterministic given its --seed; outputs are written
// atomically and chained by content digest.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

#include "rpgraph/config.hpp"
#include "rpgraph/eval.hpp"
#include "rpgraph/features.hpp"
#include "rpgraph/graph.hpp"
#include "rpgraph/nn.hpp"
#include "rpgraph/rproj.hpp"

namespace fs = std::filesystem;
using namespace rpgraph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitCheckFailed = 2;
constexpr int kExitIo = 3;

fs::path default_out_dir() {
    if (const char* env = std::getenv("RPGRAPH_OUT_DIR")) return env;
    return ".";
}

struct GraphFlags {
    std::string path;
    bool directed = false, weighted = false, bipartite = false;

    void attach(CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--graph", path, "edge list file (`src dst [weight]` lines)");
        if (required) opt->required();
        cmd->add_flag("--directed", directed, "treat edges as directed");
        cmd->add_flag("--weighted", weighted, "use the third column as edge weight");
        cmd->add_flag("--bipartite", bipartite, "two-color nodes by column role");
    }

    SparseGraph load() const {
        if (!fs::exists(path)) throw IoError("graph file not found: " + path);
        return load_edge_list(path, {directed, weighted, bipartite});
    }
};

ProjectionConfig parse_projection_flags(const std::string& init, unsigned dim, unsigned powers,
                                        bool normalize, double beta, std::uint64_t seed) {
    ProjectionConfig cfg;
    cfg.dim = dim;
    cfg.max_power = powers;
    cfg.degree_normalize = normalize;
    cfg.beta = beta;
    cfg.seed = seed;
    if (init == "gaussian") cfg.init = InitKind::Gaussian;
    else if (init == "identity") cfg.init = InitKind::Identity;
    else if (init.rfind("sparse", 0) == 0) {
        cfg.init = InitKind::Sparse;
        if (const auto at = init.find(':'); at != std::string::npos)
            cfg.sparse_s = static_cast<unsigned>(std::stoul(init.substr(at + 1)));
    } else {
        throw ValidationError("unknown --init `" + init + "` (gaussian | sparse[:s] | identity)");
    }
    return cfg;
}

std::vector<std::array<NodeId, 2>> load_pair_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pair list: " + path.string());
    std::vector<std::array<NodeId, 2>> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::uint64_t i = 0, j = 0;
        if (!(ss >> i >> j))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected `i j`");
        pairs.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
    return pairs;
}

std::vector<int> load_int_column(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<int> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(std::stoi(line));
    }
    return out;
}

void write_table(const FeatureTable& tb, const fs::path& out, const std::string& format) {
    const bool binary = format == "binary" || (format == "auto" && out.extension() == ".ftb");
    if (binary) write_table_binary(tb, out);
    else write_table_csv(tb, out);
    std::cout << "wrote " << out.string() << " (" << tb.row_count() << " rows x "
              << tb.schema.size() << " features)\n";
}

// ---------------------------------------------------------------------------

int cmd_project(const GraphFlags& gf, unsigned dim, unsigned powers, const std::string& init,
                bool normalize, double beta, std::uint64_t seed, unsigned threads,
                const std::string& precision, int bipartite_side, std::string out,
                std::string id_map) {
    const SparseGraph g = gf.load();
    if (out.empty()) out = (default_out_dir() / "projections.rpj").string();
    ProjectionConfig cfg = parse_projection_flags(init, dim, powers, normalize, beta, seed);

    TransitionMatrix t;
    if (bipartite_side >= 0) {
        auto side = bipartite_square(g, static_cast<std::uint8_t>(bipartite_side));
        t = std::move(side.transition);
        std::cout << "two-step transition over side " << bipartite_side << ": "
                  << t.node_count << " nodes\n";
    } else {
        t = transition_matrix(g);
    }
    if (cfg.init == InitKind::Identity) cfg.dim = t.node_count;

    PropagateOptions opts;
    opts.threads = threads;
    opts.degree_source = cfg.degree_normalize ? &g : nullptr;

    ProjectionSet<float> ps;
    if (precision == "double") {
        // wide-precision compute, stored as f32 like everything else
        const auto wide = propagate<double>(t, cfg, opts);
        ps.config = wide.config;
        ps.graph_hash = wide.graph_hash;
        for (const auto& m : wide.matrices) {
            Matrix<float> f(m.rows(), m.cols());
            for (std::size_t k = 0; k < m.size(); ++k)
                f.data()[k] = static_cast<float>(m.data()[k]);
            ps.matrices.push_back(std::move(f));
        }
    } else {
        ps = propagate<float>(t, cfg, opts);
    }
    save_projections(ps, out);
    if (!id_map.empty()) write_id_map(g, id_map);
    std::cout << "wrote " << out << " (|V|=" << ps.node_count() << ", dim=" << ps.dim()
              << ", powers=0.." << ps.max_power() << ", digest=" << ps.graph_hash.hex().substr(0, 12)
              << ")\n";
    return kExitOk;
}

int cmd_features(const std::string& method, const std::string& proj_path, const GraphFlags& gf,
                 const std::string& embeddings_path, const std::string& pairs_path,
                 unsigned threads, std::string out, const std::string& format) {
    if (out.empty()) out = (default_out_dir() / ("features_" + method + ".csv")).string();
    FeatureTable tb;
    if (method == "rp-dotprod") {
        if (proj_path.empty()) throw ValidationError("rp-dotprod needs --proj");
        auto loaded = load_projections(proj_path);
        if (!gf.path.empty()) {
            const auto expected = transition_digest(transition_matrix(gf.load()));
            if (!(expected == loaded.projections.graph_hash))
                std::cerr << "warning: projection file digest does not match --graph\n";
        }
        if (pairs_path.empty()) tb = rp_node_table(loaded.projections, threads);
        else tb = rp_pair_table(loaded.projections, load_pair_list(pairs_path), threads);
    } else if (method == "igf") {
        if (gf.path.empty()) throw ValidationError("igf needs --graph");
        tb = igf_table(gf.load(), {}, threads);
    } else if (method == "ri-gram") {
        if (embeddings_path.empty()) throw ValidationError("ri-gram needs --embeddings");
        const auto emb = load_embeddings(embeddings_path);
        if (pairs_path.empty()) {
            FeatureTable t2;
            t2.schema = ri_gram_node_schema();
            t2.method = "ri-gram/node";
            t2.source_digest = sha256(read_text_file(embeddings_path));
            for (const auto& [id, vec] : emb.in_vec) {
                if (!emb.has_out(id)) continue;
                t2.keys.push_back({id, id});
            }
            t2.values = Matrix<double>(t2.keys.size(), 3);
            for (std::size_t r = 0; r < t2.keys.size(); ++r) {
                const auto f = ri_gram_features(emb, t2.keys[r][0]);
                std::copy(f.begin(), f.end(), t2.values.row(r));
            }
            tb = std::move(t2);
        } else {
            const auto pairs = load_pair_list(pairs_path);
            FeatureTable t2;
            t2.pairwise = true;
            bool with_out = true;
            for (const auto& p : pairs)
                with_out = with_out && emb.has_out(p[0]) && emb.has_out(p[1]);
            t2.schema = ri_gram_pair_schema(with_out);
            t2.method = "ri-gram/pair";
            t2.source_digest = sha256(read_text_file(embeddings_path));
            t2.keys = pairs;
            t2.values = Matrix<double>(pairs.size(), t2.schema.size());
            for (std::size_t r = 0; r < pairs.size(); ++r) {
                const auto f = ri_gram_features(emb, pairs[r][0], pairs[r][1]);
                if (f.size() != t2.schema.size())
                    throw ValidationError("mixed IN/OUT availability across pairs");
                std::copy(f.begin(), f.end(), t2.values.row(r));
            }
            tb = std::move(t2);
        }
    } else {
        throw ValidationError("unknown --method `" + method + "` (rp-dotprod | igf | ri-gram)");
    }
    write_table(tb, out, format);
    return kExitOk;
}

int cmd_train(const std::string& features_path, const std::string& labels_path,
              const std::string& pair_labels_path, const std::string& hidden_csv,
              const std::string& optimizer, double lr, unsigned batch, unsigned epochs,
              double val_fraction, std::uint64_t seed, std::string out, std::string history_path) {
    if (out.empty()) out = (default_out_dir() / "model.mdl").string();
    if (history_path.empty()) history_path = (default_out_dir() / "history.csv").string();

    const FeatureTable tb = load_table_binary(features_path);
    std::vector<int> row_labels;
    if (tb.pairwise) {
        if (pair_labels_path.empty())
            throw ValidationError("pair feature tables need --pair-labels (one 0/1 per row)");
        row_labels = load_int_column(pair_labels_path);
        if (row_labels.size() != tb.row_count())
            throw ValidationError("--pair-labels row count does not match the table");
    } else {
        if (labels_path.empty()) throw ValidationError("node feature tables need --labels");
        std::ifstream in(labels_path);
        if (!in) throw IoError("cannot open labels: " + labels_path);
        std::unordered_map<std::uint64_t, int> by_node;
        LabelVocab vocab;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            std::uint64_t id;
            std::string tok;
            if (!(ss >> id >> tok)) throw ValidationError("bad label line: " + line);
            by_node[id] = vocab.intern(tok);
        }
        for (const auto& key : tb.keys) {
            auto it = by_node.find(key[0]);
            if (it == by_node.end())
                throw ValidationError("no label for node " + std::to_string(key[0]));
            row_labels.push_back(it->second);
        }
    }
    int n_classes = 0;
    for (int y : row_labels) n_classes = std::max(n_classes, y + 1);
    const bool binary = tb.pairwise || n_classes <= 2;

    Standardizer scaler;
    scaler.fit(tb.values);
    Dataset<float> pool;
    for (std::size_t r = 0; r < tb.row_count(); ++r) {
        pool.inputs.push_back(scaler.apply_row<float>(tb.values.row(r), tb.values.cols()));
        pool.labels.push_back(row_labels[r]);
    }
    std::vector<std::size_t> order(pool.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, 0x5a11du));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val = static_cast<std::size_t>(val_fraction * order.size());
    Dataset<float> train_set, val_set;
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& dst = k < n_val ? val_set : train_set;
        dst.inputs.push_back(std::move(pool.inputs[order[k]]));
        dst.labels.push_back(pool.labels[order[k]]);
    }

    std::vector<std::size_t> hidden;
    for (const auto& tok : detail::split(hidden_csv, ','))
        if (!tok.empty()) hidden.push_back(std::stoul(tok));

    TrainConfig cfg;
    cfg.optimizer = optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
    cfg.learning_rate = lr;
    cfg.batch_size = batch;
    cfg.epochs = epochs;
    cfg.loss = binary && tb.pairwise ? LossKind::BinaryCrossEntropy : LossKind::SoftmaxCrossEntropy;
    cfg.seed = derive_seed(seed, 0x7321au);

    Model<float> model = make_fcn<float>(tb.values.cols(), hidden,
                                         cfg.loss == LossKind::BinaryCrossEntropy ? 1 : n_classes,
                                         derive_seed(seed, 0x90d31u));
    const auto result = train(std::move(model), train_set, val_set, cfg);

    Sha256 cfg_hash;
    cfg_hash.update_value(cfg.learning_rate);
    cfg_hash.update_value(cfg.batch_size);
    cfg_hash.update_value(cfg.epochs);
    cfg_hash.update_value(seed);
    cfg_hash.update(tb.source_digest.bytes.data(), tb.source_digest.bytes.size());
    save_model(result.model, seed, cfg_hash.finish(), out);
    write_history_csv(result.history, history_path);
    std::cout << "wrote " << out << " (best epoch " << result.best_epoch << ", val loss "
              << result.best_val_loss << ", val accuracy "
              << result.history[result.best_epoch].val_accuracy << ", params "
              << result.model.param_count() << ")\n";
    return kExitOk;
}

int cmd_eval(const std::string& spec_path, const std::string& out_dir, unsigned threads) {
    const ExperimentSpec spec = load_experiment_spec(spec_path);
    const Report report = evaluate(spec, threads);
    const fs::path dir = out_dir.empty() ? default_out_dir() : fs::path(out_dir);
    fs::create_directories(dir);
    atomic_write(dir / "report.csv", [&](const fs::path& tmp) {
        std::ofstream(tmp) << report.to_csv();
    });
    atomic_write(dir / "report.md", [&](const fs::path& tmp) {
        std::ofstream(tmp) << report.to_markdown();
    });
    std::cout << report.to_markdown() << "\nreport digest: " << report.digest().hex() << "\n";
    return report.checks_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_oracle_check(const GraphFlags& gf, const std::string& proj_path, std::uint64_t samples,
                     double tolerance, std::uint64_t seed) {
    if (samples == 0) throw ValidationError("--samples must be positive");
    const SparseGraph g = gf.load();
    const TransitionMatrix t = transition_matrix(g);
    if (t.node_count > kDefaultDenseCap)
        throw ValidationError("graph exceeds the dense cap (" +
                              std::to_string(kDefaultDenseCap) + " nodes)");
    const Digest expected = transition_digest(t);
    auto loaded = load_projections(proj_path, &expected);
    if (loaded.digest_mismatch)
        throw ValidationError("projection file was built from a different graph (digest mismatch)");
    const auto& ps = loaded.projections;
    const std::uint32_t n_pow = ps.max_power();

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<NodeId> node(0, t.node_count - 1);
    std::uniform_int_distribution<std::uint32_t> power(0, n_pow);
    double max_err = 0, sum_err = 0;
    std::vector<double> errs;
    errs.reserve(samples);
    // cache exact walk rows per node as needed
    std::map<NodeId, std::vector<std::vector<double>>> exact;
    for (std::uint64_t it = 0; it < samples; ++it) {
        const NodeId i = node(rng), j = node(rng);
        const std::uint32_t k = power(rng), s = power(rng);
        for (NodeId v : {i, j})
            if (!exact.count(v)) exact[v] = walk_rows(t, v, n_pow);
        const double truth = ordered_dot(exact[i][k], exact[j][s]);
        const double est = projection_dot(ps, i, k, j, s);
        const double err = std::abs(est - truth);
        errs.push_back(err);
        max_err = std::max(max_err, err);
        sum_err += err;
    }
    std::sort(errs.begin(), errs.end());
    const double p99 = errs[static_cast<std::size_t>(0.99 * (errs.size() - 1))];
    std::printf("samples=%llu max=%.6g mean=%.6g p99=%.6g tolerance=%.6g\n",
                static_cast<unsigned long long>(samples), max_err, sum_err / samples, p99,
                tolerance);
    if (p99 > tolerance) {
        std::cout << "FAIL: 99th percentile error exceeds tolerance\n";
        return kExitCheckFailed;
    }
    std::cout << "OK\n";
    return kExitOk;
}

int cmd_gen_sbm(const std::string& sizes_csv, double p_intra, double p_inter, std::uint64_t seed,
                const std::string& out_edges, const std::string& out_labels) {
    SbmSpec spec;
    for (const auto& tok : detail::split(sizes_csv, ','))
        spec.block_sizes.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
    spec.p_intra = p_intra;
    spec.p_inter = p_inter;
    spec.seed = seed;
    auto [g, labels] = generate_sbm(spec);
    atomic_write(out_edges, [&](const fs::path& tmp) {
        std::ofstream out(tmp);
        for (NodeId i = 0; i < g.node_count; ++i)
            for (NodeId j : g.neighbors(i))
                if (j > i) out << i << '\t' << j << '\n';
        if (!out) throw IoError("failed writing edges: " + tmp.string());
    });
    write_labels(labels, out_labels);
    std::cout << "wrote " << out_edges << " (" << g.node_count << " nodes, " << g.edge_count()
              << " edges) and " << out_labels << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-projection graph features: projections, feature tables, training, "
                 "cross-graph evaluation"};
    app.require_subcommand(1);

    // --- project
    auto* project = app.add_subcommand("project", "build and store projections of walk powers");
    GraphFlags pg;
    pg.attach(project);
    unsigned dim = 128, powers = 10, threads = 1;
    std::string init = "gaussian", precision = "single", out, id_map;
    bool normalize = false;
    double beta = -0.9;
    std::uint64_t seed = 0;
    int side = -1;
    project->add_option("--dim", dim, "projection dimension");
    project->add_option("--powers", powers, "highest transition power");
    project->add_option("--init", init, "gaussian | sparse[:s] | identity");
    project->add_flag("--normalize", normalize, "pre-scale rows by (degree/2m)^beta");
    project->add_option("--beta", beta, "degree normalization exponent");
    project->add_option("--seed", seed, "random seed");
    project->add_option("--threads", threads, "worker threads");
    project->add_option("--precision", precision, "single | double (compute precision)");
    project->add_option("--side", side, "bipartite side to square into (0 or 1)");
    project->add_option("--out", out, "output projection file");
    project->add_option("--id-map", id_map, "also write `id<TAB>original` map here");

    // --- features
    auto* features = app.add_subcommand("features", "export feature tables (csv or binary)");
    GraphFlags fg;
    std::string method = "rp-dotprod", proj_path, embeddings_path, pairs_path, fmt = "auto",
                fout;
    unsigned fthreads = 1;
    features->add_option("--method", method, "rp-dotprod | igf | ri-gram")->required();
    features->add_option("--proj", proj_path, "projection file (rp-dotprod)");
    fg.attach(features, /*required=*/false);
    features->add_option("--embeddings", embeddings_path, "embedding vectors (ri-gram)");
    features->add_option("--pairs", pairs_path, "pair list `i j` per line; omit for node table");
    features->add_option("--threads", fthreads, "worker threads");
    features->add_option("--out", fout, "output path (.csv or .ftb)");
    features->add_option("--format", fmt, "auto | csv | binary");

    // --- train
    auto* train_cmd = app.add_subcommand("train", "train a classifier head on a feature table");
    std::string tfeatures, tlabels, tpair_labels, thidden = "128,128", topt = "adam", tout,
                thistory;
    double tlr = 1e-3, tval = 0.2;
    unsigned tbatch = 256, tepochs = 10;
    std::uint64_t tseed = 0;
    train_cmd->add_option("--features", tfeatures, "binary feature table (.ftb)")->required();
    train_cmd->add_option("--labels", tlabels, "node labels `id<TAB>label`");
    train_cmd->add_option("--pair-labels", tpair_labels, "one 0/1 per pair row");
    train_cmd->add_option("--hidden", thidden, "hidden layer sizes, comma separated");
    train_cmd->add_option("--optimizer", topt, "adam | sgd");
    train_cmd->add_option("--lr", tlr, "learning rate");
    train_cmd->add_option("--batch", tbatch, "batch size");
    train_cmd->add_option("--epochs", tepochs, "training epochs");
    train_cmd->add_option("--val-fraction", tval, "validation split fraction");
    train_cmd->add_option("--seed", tseed, "random seed");
    train_cmd->add_option("--out", tout, "model output path");
    train_cmd->add_option("--history", thistory, "training history csv");

    // --- eval
    auto* eval_cmd = app.add_subcommand("eval", "run a cross-graph experiment spec");
    std::string spec_path, eval_out_dir;
    unsigned ethreads = 1;
    eval_cmd->add_option("--spec", spec_path, "experiment file")->required();
    eval_cmd->add_option("--out-dir", eval_out_dir, "report directory");
    eval_cmd->add_option("--threads", ethreads, "worker threads");

    // --- oracle-check
    auto* oracle = app.add_subcommand("oracle-check",
                                      "compare stored projections against exact walk features");
    GraphFlags og;
    og.attach(oracle);
    std::string oproj;
    std::uint64_t osamples = 1000, oseed = 0;
    double otol = 0.05;
    oracle->add_option("--proj", oproj, "projection file")->required();
    oracle->add_option("--samples", osamples, "sampled (i,j,k,s) tuples");
    oracle->add_option("--tolerance", otol, "99th percentile error bound");
    oracle->add_option("--seed", oseed, "sampling seed");

    // --- gen-sbm
    auto* gen = app.add_subcommand("gen-sbm", "write a planted block-model graph");
    std::string sizes = "150,150", gedges, glabels;
    double gpi = 0.1, gpo = 0.01;
    std::uint64_t gseed = 0;
    gen->add_option("--sizes", sizes, "block sizes, comma separated");
    gen->add_option("--p-intra", gpi, "within-block edge probability");
    gen->add_option("--p-inter", gpo, "between-block edge probability");
    gen->add_option("--seed", gseed, "random seed");
    gen->add_option("--out-edges", gedges, "edge list output")->required();
    gen->add_option("--out-labels", glabels, "block label output")->required();

    try {
        app.parse(argc, argv);
        if (*project)
            return cmd_project(pg, dim, powers, init, normalize, beta, seed, threads, precision,
                               side, out, id_map);
        if (*features)
            return cmd_features(method, proj_path, fg, embeddings_path, pairs_path, fthreads,
                                fout, fmt);
        if (*train_cmd)
            return cmd_train(tfeatures, tlabels, tpair_labels, thidden, topt, tlr, tbatch,
                             tepochs, tval, tseed, tout, thistory);
        if (*eval_cmd) return cmd_eval(spec_path, eval_out_dir, ethreads);
        if (*oracle) return cmd_oracle_check(og, oproj, osamples, otol, oseed);
        if (*gen) return cmd_gen_sbm(sizes, gpi, gpo, gseed, gedges, glabels);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
