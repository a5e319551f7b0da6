#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rpgraph/eval.hpp"

namespace rpgraph {

// ---------------------------------------------------------------------------
// Experiment files: `key = value` lines under [section] headers, one
// [train-graph]/[test-graph] section per graph, `#` comments. Errors
// carry the offending line number.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    while (true) {
        const auto at = s.find(sep);
        out.emplace_back(trim(s.substr(0, at)));
        if (at == std::string_view::npos) break;
        s = s.substr(at + 1);
    }
    return out;
}

struct SpecParseError : ValidationError {
    using ValidationError::ValidationError;
};

class SpecParser {
public:
    SpecParser(const std::filesystem::path& path) : path_(path.string()) {}

    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw SpecParseError(path_ + ":" + std::to_string(line) + ": " + msg);
    }

    double number(std::string_view v, std::size_t line) const {
        double out = 0;
        if (!parse_double(v, out)) fail(line, "expected a number, got `" + std::string(v) + "`");
        return out;
    }

    std::uint64_t integer(std::string_view v, std::size_t line) const {
        std::uint64_t out = 0;
        if (!parse_u64(v, out)) fail(line, "expected an integer, got `" + std::string(v) + "`");
        return out;
    }

    bool boolean(std::string_view v, std::size_t line) const {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(line, "expected true/false, got `" + std::string(v) + "`");
    }

private:
    std::string path_;
};

}  // namespace detail

inline SbmSpec parse_sbm_value(const std::string& value) {
    // sizes:p_intra:p_inter:seed, sizes comma-separated
    const auto parts = detail::split(value, ':');
    if (parts.size() != 4) throw ValidationError("sbm value must be `sizes:p_intra:p_inter:seed`");
    SbmSpec spec;
    for (const auto& tok : detail::split(parts[0], ',')) {
        std::uint64_t v = 0;
        if (!detail::parse_u64(tok, v)) throw ValidationError("bad sbm block size `" + tok + "`");
        spec.block_sizes.push_back(static_cast<std::uint32_t>(v));
    }
    double pi = 0, po = 0;
    std::uint64_t seed = 0;
    if (!detail::parse_double(parts[1], pi) || !detail::parse_double(parts[2], po) ||
        !detail::parse_u64(parts[3], seed))
        throw ValidationError("bad sbm value `" + value + "`");
    spec.p_intra = pi;
    spec.p_inter = po;
    spec.seed = seed;
    spec.validate();
    return spec;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open experiment spec: " + path.string());
    detail::SpecParser p(path);

    ExperimentSpec spec;
    spec.seeds.clear();
    std::string section;
    GraphSource* graph = nullptr;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto sv = detail::trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        if (sv.front() == '[') {
            if (sv.back() != ']') p.fail(line_no, "unterminated section header");
            section = std::string(sv.substr(1, sv.size() - 2));
            graph = nullptr;
            if (section == "train-graph") {
                spec.train_graphs.emplace_back();
                graph = &spec.train_graphs.back();
                graph->name = "train" + std::to_string(spec.train_graphs.size());
            } else if (section == "test-graph") {
                spec.test_graphs.emplace_back();
                graph = &spec.test_graphs.back();
                graph->name = "test" + std::to_string(spec.test_graphs.size());
            } else if (section != "experiment" && section != "projection" && section != "model" &&
                       section != "train" && section != "checks") {
                p.fail(line_no, "unknown section [" + section + "]");
            }
            continue;
        }
        if (section == "checks") {
            // `<metric> >= <value>`
            const auto at = sv.find(">=");
            if (at == std::string_view::npos) p.fail(line_no, "check must be `metric >= value`");
            MetricCheck c;
            c.metric = std::string(detail::trim(sv.substr(0, at)));
            c.threshold = p.number(detail::trim(sv.substr(at + 2)), line_no);
            spec.checks.push_back(std::move(c));
            continue;
        }
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos) p.fail(line_no, "expected `key = value`");
        const std::string key(detail::trim(sv.substr(0, eq)));
        const std::string value(detail::trim(sv.substr(eq + 1)));

        if (section == "experiment") {
            if (key == "task") {
                if (value == "node-class") spec.task = Task::NodeClass;
                else if (value == "pair-same-class") spec.task = Task::PairSameClass;
                else p.fail(line_no, "unknown task `" + value + "`");
            } else if (key == "method") {
                if (value == "rp-dotprod") spec.method = Method::RpDotProd;
                else if (value == "rp-convnet") spec.method = Method::RpConvNet;
                else if (value == "igf") spec.method = Method::Igf;
                else if (value == "ri-gram") spec.method = Method::RiGram;
                else if (value == "ensemble" || value == "rp-dotprod+igf")
                    spec.method = Method::Ensemble;
                else p.fail(line_no, "unknown method `" + value + "`");
            } else if (key == "seeds") {
                for (const auto& tok : detail::split(value, ','))
                    spec.seeds.push_back(p.integer(tok, line_no));
            } else if (key == "pairs-per-node") {
                spec.pairs_per_node = static_cast<std::uint32_t>(p.integer(value, line_no));
            } else if (key == "val-fraction") {
                spec.val_fraction = p.number(value, line_no);
            } else if (key == "diagnostic") {
                spec.diagnostic = p.boolean(value, line_no);
            } else {
                p.fail(line_no, "unknown experiment key `" + key + "`");
            }
        } else if (section == "projection") {
            if (key == "dim") spec.projection.dim = static_cast<std::uint32_t>(p.integer(value, line_no));
            else if (key == "powers")
                spec.projection.max_power = static_cast<std::uint32_t>(p.integer(value, line_no));
            else if (key == "init") {
                if (value == "gaussian") spec.projection.init = InitKind::Gaussian;
                else if (value == "identity") spec.projection.init = InitKind::Identity;
                else if (value.rfind("sparse", 0) == 0) {
                    spec.projection.init = InitKind::Sparse;
                    const auto at = value.find(':');
                    if (at != std::string::npos)
                        spec.projection.sparse_s =
                            static_cast<unsigned>(p.integer(value.substr(at + 1), line_no));
                } else p.fail(line_no, "unknown init `" + value + "`");
            } else if (key == "normalize") spec.projection.degree_normalize = p.boolean(value, line_no);
            else if (key == "beta") spec.projection.beta = p.number(value, line_no);
            else p.fail(line_no, "unknown projection key `" + key + "`");
        } else if (section == "model") {
            auto sizes = [&](const std::string& v) {
                std::vector<std::size_t> out;
                for (const auto& tok : detail::split(v, ','))
                    out.push_back(static_cast<std::size_t>(p.integer(tok, line_no)));
                return out;
            };
            if (key == "hidden") spec.hidden = sizes(value);
            else if (key == "conv-channels") spec.convnet.conv_channels = sizes(value);
            else if (key == "head-hidden") spec.convnet.head_hidden = sizes(value);
            else if (key == "conv-window")
                spec.convnet.window = static_cast<std::uint32_t>(p.integer(value, line_no));
            else p.fail(line_no, "unknown model key `" + key + "`");
        } else if (section == "train") {
            if (key == "optimizer") {
                if (value == "adam") spec.train_config.optimizer = OptimizerKind::Adam;
                else if (value == "sgd") spec.train_config.optimizer = OptimizerKind::Sgd;
                else p.fail(line_no, "unknown optimizer `" + value + "`");
            } else if (key == "lr") spec.train_config.learning_rate = p.number(value, line_no);
            else if (key == "batch")
                spec.train_config.batch_size = static_cast<std::size_t>(p.integer(value, line_no));
            else if (key == "epochs")
                spec.train_config.epochs = static_cast<std::uint32_t>(p.integer(value, line_no));
            else p.fail(line_no, "unknown train key `" + key + "`");
        } else if (section == "train-graph" || section == "test-graph") {
            if (key == "name") graph->name = value;
            else if (key == "edges") graph->edges = value;
            else if (key == "labels") graph->labels = value;
            else if (key == "embeddings") graph->embeddings = value;
            else if (key == "directed") graph->load.directed = p.boolean(value, line_no);
            else if (key == "weighted") graph->load.weighted = p.boolean(value, line_no);
            else if (key == "bipartite") graph->load.bipartite = p.boolean(value, line_no);
            else if (key == "sbm") {
                try {
                    graph->sbm = parse_sbm_value(value);
                } catch (const ValidationError& e) {
                    p.fail(line_no, e.what());
                }
            } else p.fail(line_no, "unknown graph key `" + key + "`");
        } else {
            p.fail(line_no, "key outside any section");
        }
    }
    if (spec.seeds.empty()) spec.seeds = {1};
    spec.validate();
    return spec;
}

}  // namespace rpgraph
