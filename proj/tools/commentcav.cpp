// commentcav: command-line front end for the concept probing and steering
// pipeline. Every subcommand is a thin wrapper over the library.

#include "commentcav/comment_parser.hpp"
#include "commentcav/dataset.hpp"
#include "commentcav/metrics.hpp"
#include "commentcav/pipeline.hpp"
#include "commentcav/probes.hpp"
#include "commentcav/profiler.hpp"
#include "commentcav/steering.hpp"
#include "commentcav/tinylm.hpp"
#include "commentcav/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace commentcav;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ConceptKind concept_arg(const std::string & name) {
    const auto k = parse_concept(name);
    if (!k) {
        throw usage_error("unknown concept '" + name + "' (comment|javadoc|inline|multiline)");
    }
    return *k;
}

std::string dump(const json & j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

json span_json(const CommentSpan & s) {
    return {{"byte_start", s.byte_start}, {"byte_end", s.byte_end}, {"line_start", s.line_start},
            {"line_end", s.line_end},     {"syntax", to_string(s.syntax)}, {"placement", to_string(s.placement)},
            {"text", s.text}};
}

int cmd_extract(const std::string & file, bool as_json) {
    const std::string src = read_file(file);
    const auto spans = scan_comments(src);
    const auto groups = classify_concepts(src, spans);
    for (const auto & g : groups) {
        if (as_json) {
            json spans_j = json::array();
            for (const auto & s : g.spans) spans_j.push_back(span_json(s));
            std::cout << dump({{"kind", to_string(g.kind)}, {"spans", spans_j}}) << '\n';
        } else {
            const auto & first = g.spans.front();
            const auto & last = g.spans.back();
            std::cout << to_string(g.kind) << '\t' << first.line_start << '-' << last.line_end << '\t'
                      << g.spans.size() << " span(s)\n";
        }
    }
    return kOk;
}

int cmd_strip(const std::string & file, const std::string & concept_kind) {
    const std::string src = read_file(file);
    std::cout << strip_concept(src, concept_arg(concept_kind));
    return kOk;
}

int cmd_build_dataset(const std::string & corpus, const std::string & concept_kind, const std::string & out) {
    const auto result = build_pairs(corpus, concept_arg(concept_kind));
    for (const auto & w : result.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    write_file_atomic(out, pairs_to_jsonl(result.pairs));
    std::cerr << result.pairs.size() << " pairs written to " << out << '\n';
    return kOk;
}

int cmd_init_model(const std::string & out, tinylm::ModelConfig config) {
    tinylm::save_model(tinylm::init_model(config), out);
    return kOk;
}

int cmd_embed(const std::string & model_file, const std::string & in, const std::string & out) {
    const auto model = tinylm::load_model(model_file);
    const auto pairs = pairs_from_jsonl(read_file(in));
    const auto result = embed_pairs(model, pairs);
    for (const auto & id : result.skipped) {
        std::cerr << "warning: skipped " << id << ": longer than max_seq\n";
    }
    write_file_atomic(out, embeddings_to_jsonl(result.records));
    return kOk;
}

int cmd_train_probes(const std::string & embeddings, const std::string & concept_kind, const std::string & out,
                     uint64_t seed, const std::string & model_id, bool curves) {
    const auto records = embeddings_from_jsonl(read_file(embeddings));
    const auto layers = to_layer_pairs(records);
    const auto training = train_probes(layers, concept_arg(concept_kind), seed, model_id, curves);
    save_probe_training(training, out);
    for (const auto & p : training.probes) {
        std::cerr << "layer " << p.layer << ": test accuracy " << p.test_accuracy
                  << (p.converged ? "" : " (not converged)") << '\n';
    }
    return kOk;
}

int cmd_steer_generate(const std::string & model_file, const std::string & probes_dir, std::string probe_root,
                       const std::string & concept_kind, const std::string & direction_name, std::optional<double> pt,
                       const std::string & threshold_arg, const std::string & scope, const std::string & in,
                       const std::string & out, size_t max_new_tokens) {
    const auto model = tinylm::load_model(model_file);
    SteeringPlan plan;
    plan.concept_kind = concept_arg(concept_kind);
    const auto direction = parse_direction(direction_name);
    if (!direction) {
        throw usage_error("--direction must be toward or against");
    }
    plan.direction = *direction;
    plan.target_p = pt.value_or(default_target(plan.direction));
    if (scope == "all") {
        plan.scope = tinylm::HookScope::AllSteps;
    } else if (scope == "prompt") {
        plan.scope = tinylm::HookScope::PromptOnly;
    } else {
        throw usage_error("--scope must be all or prompt");
    }
    if (threshold_arg == "auto") {
        if (probe_root.empty()) probe_root = probes_dir;
        plan.threshold_t = dynamic_threshold(collect_accuracy_tables(probe_root));
    } else {
        try {
            plan.threshold_t = std::stod(threshold_arg);
        } catch (const std::exception &) {
            throw usage_error("--threshold must be a number or auto");
        }
    }
    plan.probes = load_probe_store(probes_dir, plan.concept_kind);
    validate(plan);
    std::cerr << "threshold " << plan.threshold_t << ", qualifying layers:";
    for (size_t l : qualifying_layers(plan)) std::cerr << ' ' << l;
    std::cerr << '\n';

    const auto records = records_from_jsonl(read_file(in));
    std::vector<std::string> outputs(records.size());
    parallel_for(records.size(), [&](size_t i) {
        outputs[i] = generate(model, records[i].input, max_new_tokens, &plan);
    });
    std::string text;
    for (size_t i = 0; i < records.size(); ++i) {
        text += dump({{"id", records[i].id}, {"output", outputs[i]}}) + "\n";
    }
    write_file_atomic(out, text);
    return kOk;
}

std::map<std::string, std::string> load_texts(const std::string & file, const char * key) {
    std::map<std::string, std::string> out;
    std::istringstream in(read_file(file));
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            const std::string text = j.contains(key) ? j.at(key).get<std::string>() : j.at("text").get<std::string>();
            out[j.at("id").get<std::string>()] = text;
        } catch (const json::exception & e) {
            throw data_error(file + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

int cmd_eval(const std::string & pred, const std::string & ref, const std::string & metric_list,
             const std::string & out) {
    std::vector<std::string> names;
    std::stringstream ss(metric_list);
    for (std::string m; std::getline(ss, m, ',');) {
        if (!m.empty()) names.push_back(m);
    }
    const auto preds = load_texts(pred, "output");
    const auto refs = load_texts(ref, "reference");
    std::vector<std::string> ids, cands, references;
    for (const auto & [id, text] : refs) {
        const auto it = preds.find(id);
        if (it == preds.end()) {
            throw data_error("no prediction for reference id " + id);
        }
        ids.push_back(id);
        cands.push_back(it->second);
        references.push_back(text);
    }
    metrics::MetricReport rep;
    try {
        rep = metrics::evaluate(ids, cands, references, names);
    } catch (const std::invalid_argument & e) {
        throw usage_error(e.what());
    }
    json per = json::object();
    for (size_t i = 0; i < rep.ids.size(); ++i) per[rep.ids[i]] = rep.per_record[i];
    const json report = {{"per_record", per}, {"aggregate", rep.aggregate}};
    if (out.empty()) {
        std::cout << dump(report, 2) << '\n';
    } else {
        write_file_atomic(out, dump(report, 2) + "\n");
    }
    return kOk;
}

int cmd_eval_compare(const std::string & run_a, const std::string & run_b, const std::string & out) {
    const json a = json::parse(read_file(run_a));
    const json b = json::parse(read_file(run_b));
    json deltas = json::object();
    for (const auto & [metric, va] : a.at("aggregate").items()) {
        if (!b.at("aggregate").contains(metric)) continue;
        const double orig = va.get<double>();
        const double mod = b.at("aggregate").at(metric).get<double>();
        deltas[metric] = orig == 0.0 ? json(nullptr) : json(metrics::relative_delta(mod, orig));
    }
    const json report = {{"baseline", run_a}, {"modified", run_b}, {"relative_delta_percent", deltas}};
    if (out.empty()) {
        std::cout << dump(report, 2) << '\n';
    } else {
        write_file_atomic(out, dump(report, 2) + "\n");
    }
    return kOk;
}

int cmd_profile(const std::string & model_file, const std::string & probes_dir, const std::string & concept_kind,
                const std::string & codes_file, const std::string & tasks_arg, const std::string & out) {
    const auto model = tinylm::load_model(model_file);
    const auto probes = load_probe_store(probes_dir, concept_kind.empty() ? std::nullopt
                                                                     : std::optional<ConceptKind>(concept_arg(concept_kind)));
    std::vector<std::string> codes;
    for (const auto & [id, code] : load_texts(codes_file, "code")) codes.push_back(code);
    const auto tasks = tasks_arg == "builtin" ? builtin_tasks() : load_tasks(tasks_arg);
    const auto profile = activation_profile(model, probes, build_grid(tasks, codes));
    write_file_atomic(out, profile_to_json(profile));
    fs::path csv = out;
    csv.replace_extension(".csv");
    write_file_atomic(csv, profile_to_csv(profile));
    return kOk;
}

int cmd_run(const std::string & config_file) {
    const fs::path path(config_file);
    const auto config = parse_config(read_file(path), path.parent_path());
    const auto manifest = run_experiment(config);
    for (const auto & s : manifest.stages) {
        std::cerr << s.name << ": " << s.status << (s.detail.empty() ? "" : " (" + s.detail + ")") << '\n';
    }
    return kOk;
}

int cmd_report(const std::vector<std::string> & runs, const std::string & out) {
    std::vector<fs::path> dirs(runs.begin(), runs.end());
    for (const auto & p : report(dirs, out)) {
        std::cerr << "wrote " << p.string() << '\n';
    }
    return kOk;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Concept probing and activation steering for code comments"};
    app.require_subcommand(1);

    std::string file, concept_kind, corpus, out, in, model_file, probes_dir, probe_root, direction = "against",
                                                                                  threshold = "auto", scope = "all";
    bool as_json = false;

    auto * extract = app.add_subcommand("extract", "List comment groups of a Java file");
    extract->add_option("file", file)->required();
    extract->add_flag("--json", as_json, "Emit JSON lines");

    auto * strip = app.add_subcommand("strip", "Print a Java file with one comment concept removed");
    strip->add_option("file", file)->required();
    strip->add_option("--concept", concept_kind)->required();

    auto * build = app.add_subcommand("build-dataset", "Build positive/negative pairs from a corpus");
    build->add_option("--corpus", corpus)->required();
    build->add_option("--concept", concept_kind)->required();
    build->add_option("--out", out)->required();

    tinylm::ModelConfig mc;
    auto * init = app.add_subcommand("init-model", "Write a freshly initialized toy model");
    init->add_option("--out", out)->required();
    init->add_option("--d-model", mc.d_model);
    init->add_option("--layers", mc.n_layers);
    init->add_option("--heads", mc.n_heads);
    init->add_option("--ff-mult", mc.ff_mult);
    init->add_option("--max-seq", mc.max_seq);
    init->add_option("--seed", mc.seed);

    auto * embed = app.add_subcommand("embed", "Capture per-layer last-token states for a dataset");
    embed->add_option("--model", model_file)->required();
    embed->add_option("--in", in)->required();
    embed->add_option("--out", out)->required();

    uint64_t seed = 0;
    std::string model_id;
    bool curves = false;
    auto * train = app.add_subcommand("train-probes", "Train one probe per layer");
    train->add_option("--embeddings", in)->required();
    train->add_option("--concept", concept_kind)->required();
    train->add_option("--out", out)->required();
    train->add_option("--seed", seed);
    train->add_option("--model-id", model_id);
    train->add_flag("--curves", curves, "Also record accuracy vs train size");

    std::optional<double> pt;
    size_t max_new = 32;
    auto * steer = app.add_subcommand("steer-generate", "Greedy generation with concept steering");
    steer->add_option("--model", model_file)->required();
    steer->add_option("--probes", probes_dir)->required();
    steer->add_option("--probe-root", probe_root, "Probe stores scanned for --threshold auto");
    steer->add_option("--concept", concept_kind)->required();
    steer->add_option("--direction", direction);
    steer->add_option("--pt", pt);
    steer->add_option("--threshold", threshold);
    steer->add_option("--scope", scope);
    steer->add_option("--in", in)->required();
    steer->add_option("--out", out)->required();
    steer->add_option("--max-new-tokens", max_new);

    std::string pred, ref, metric_list = "em,em_trim,bleu4,bleu_trim,es,id_em,id_f1";
    std::vector<std::string> compare;
    auto * eval = app.add_subcommand("eval", "Score predictions against references");
    eval->add_option("--pred", pred);
    eval->add_option("--ref", ref);
    eval->add_option("--metrics", metric_list);
    eval->add_option("--out", out);
    eval->add_option("--compare", compare)->expected(2);

    std::string codes, tasks = "builtin";
    auto * profile = app.add_subcommand("profile", "Mean concept activation per task and layer");
    profile->add_option("--model", model_file)->required();
    profile->add_option("--probes", probes_dir)->required();
    profile->add_option("--concept", concept_kind);
    profile->add_option("--codes", codes)->required();
    profile->add_option("--tasks", tasks);
    profile->add_option("--out", out)->required();

    std::string config_file;
    auto * run = app.add_subcommand("run", "Run the four-setting experiment from a config file");
    run->add_option("config", config_file)->required();

    std::vector<std::string> run_dirs;
    auto * rep = app.add_subcommand("report", "Merge run directories into a Markdown/CSV report");
    rep->add_option("runs", run_dirs)->required();
    rep->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*extract) return cmd_extract(file, as_json);
        if (*strip) return cmd_strip(file, concept_kind);
        if (*build) return cmd_build_dataset(corpus, concept_kind, out);
        if (*init) return cmd_init_model(out, mc);
        if (*embed) return cmd_embed(model_file, in, out);
        if (*train) return cmd_train_probes(in, concept_kind, out, seed, model_id, curves);
        if (*steer) {
            return cmd_steer_generate(model_file, probes_dir, probe_root, concept_kind, direction, pt, threshold, scope,
                                      in, out, max_new);
        }
        if (*eval) {
            if (!compare.empty()) return cmd_eval_compare(compare[0], compare[1], out);
            if (pred.empty() || ref.empty()) throw usage_error("eval needs --pred and --ref, or --compare A B");
            return cmd_eval(pred, ref, metric_list, out);
        }
        if (*profile) return cmd_profile(model_file, probes_dir, concept_kind, codes, tasks, out);
        if (*run) return cmd_run(config_file);
        if (*rep) return cmd_report(run_dirs, out);
    } catch (const usage_error & e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const data_error & e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const json::exception & e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument & e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::domain_error & e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::logic_error & e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    } catch (const std::exception & e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
