#include "commentcav/pipeline.hpp"

#include "commentcav/util.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <set>
#include <sstream>

namespace commentcav {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string dump_line(const json & j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string dump_pretty(const json & j) {
    return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

template <typename Fn>
void for_each_jsonl(std::string_view text, const char * what, Fn && fn) {
    size_t start = 0;
    size_t line_no = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        ++line_no;
        const auto line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            fn(json::parse(line));
        } catch (const json::exception & e) {
            throw data_error(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string content_hash(std::string_view bytes) {
    return "fnv1a64:" + hex64(fnv1a64(bytes));
}

} // namespace

// ---- embeddings -----------------------------------------------------------

EmbedResult embed_pairs(const tinylm::Model & model, const std::vector<ExamplePair> & pairs) {
    std::vector<std::optional<std::pair<EmbeddingRecord, EmbeddingRecord>>> slots(pairs.size());
    parallel_for(pairs.size(), [&](size_t i) {
        const auto & p = pairs[i];
        const auto pos_tokens = tinylm::tokenize(p.positive);
        const auto neg_tokens = tinylm::tokenize(p.negative);
        if (pos_tokens.size() > model.config.max_seq || neg_tokens.size() > model.config.max_seq) {
            return;
        }
        auto capture = [&](const std::vector<int> & tokens, int label) {
            EmbeddingRecord r{p.id, label, {}};
            for (auto & layer : tinylm::forward_capture(model, tokens).trace) {
                r.layers.push_back(std::move(layer.vector));
            }
            return r;
        };
        slots[i] = std::make_pair(capture(pos_tokens, 1), capture(neg_tokens, 0));
    });
    EmbedResult result;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (!slots[i]) {
            result.skipped.push_back(pairs[i].id);
            continue;
        }
        result.records.push_back(std::move(slots[i]->first));
        result.records.push_back(std::move(slots[i]->second));
    }
    return result;
}

std::string embeddings_to_jsonl(const std::vector<EmbeddingRecord> & records) {
    std::string out;
    for (const auto & r : records) {
        out += dump_line({{"id", r.id}, {"label", r.label}, {"layers", r.layers}});
        out += '\n';
    }
    return out;
}

std::vector<EmbeddingRecord> embeddings_from_jsonl(std::string_view text) {
    std::vector<EmbeddingRecord> records;
    for_each_jsonl(text, "embeddings", [&](const json & j) {
        EmbeddingRecord r;
        r.id = j.at("id").get<std::string>();
        r.label = j.at("label").get<int>();
        r.layers = j.at("layers").get<std::vector<Vector>>();
        if (r.label != 0 && r.label != 1) {
            throw data_error("embedding label must be 0 or 1 for " + r.id);
        }
        records.push_back(std::move(r));
    });
    return records;
}

std::vector<LayerPairs> to_layer_pairs(const std::vector<EmbeddingRecord> & records) {
    std::map<std::string, std::pair<const EmbeddingRecord *, const EmbeddingRecord *>> by_id;
    size_t n_layers = 0;
    size_t dim = 0;
    for (const auto & r : records) {
        if (r.layers.empty()) {
            throw data_error("embedding record " + r.id + " has no layers");
        }
        if (n_layers == 0) {
            n_layers = r.layers.size();
            dim = r.layers.front().size();
        }
        if (r.layers.size() != n_layers) {
            throw data_error("embedding record " + r.id + " has " + std::to_string(r.layers.size()) +
                             " layers, expected " + std::to_string(n_layers));
        }
        for (const auto & v : r.layers) {
            if (v.size() != dim) {
                throw data_error("embedding record " + r.id + " has inconsistent vector width");
            }
        }
        auto & slot = by_id[r.id];
        (r.label == 1 ? slot.first : slot.second) = &r;
    }
    std::vector<LayerPairs> layers(n_layers);
    for (size_t l = 0; l < n_layers; ++l) {
        layers[l].layer = l + 1;
    }
    for (const auto & [id, slot] : by_id) {
        if (!slot.first || !slot.second) {
            continue;
        }
        for (size_t l = 0; l < n_layers; ++l) {
            layers[l].ids.push_back(id);
            layers[l].pos.push_back(slot.first->layers[l]);
            layers[l].neg.push_back(slot.second->layers[l]);
        }
    }
    return layers;
}

// ---- probe training -------------------------------------------------------

size_t probe_test_size(size_t pair_count) {
    if (pair_count < 2) {
        throw data_error("need at least 2 pairs to train probes, have " + std::to_string(pair_count));
    }
    return std::min(sample_size(pair_count), pair_count / 2);
}

ProbeTraining train_probes(const std::vector<LayerPairs> & layers, ConceptKind concept_kind, uint64_t seed,
                           const std::string & model_id, bool with_curves) {
    if (layers.empty()) {
        throw data_error("no embeddings to train on");
    }
    ProbeTraining out;
    out.test_size = probe_test_size(layers.front().ids.size());
    out.probes.resize(layers.size());
    if (with_curves) {
        out.curves.resize(layers.size());
    }
    parallel_for(layers.size(), [&](size_t l) {
        Probe p = train_layer_probe(layers[l], concept_kind, out.test_size, out.test_size, seed);
        p.model_id = model_id;
        out.probes[l] = std::move(p);
        if (with_curves) {
            out.curves[l] = accuracy_curve(layers[l], out.test_size, seed);
        }
    });
    return out;
}

void save_probe_training(const ProbeTraining & training, const fs::path & dir) {
    fs::create_directories(dir);
    for (const auto & p : training.probes) {
        save_probe(p, dir);
    }
    if (!training.curves.empty()) {
        json curves = json::array();
        for (const auto & c : training.curves) {
            json points = json::array();
            for (const auto & pt : c.points) {
                points.push_back({{"train_size", pt.train_size}, {"test_accuracy", pt.test_accuracy}});
            }
            curves.push_back({{"layer", c.layer}, {"test_ids", c.test_ids}, {"points", points}});
        }
        const std::string concept_kind = training.probes.empty() ? "comment" : to_string(training.probes.front().concept_kind);
        write_file_atomic(dir / ("curves_" + concept_kind + ".json"),
                          dump_pretty({{"test_size", training.test_size}, {"curves", curves}}));
    }
}

std::vector<AccuracyCurve> load_curves(const fs::path & dir) {
    std::vector<AccuracyCurve> curves;
    if (!fs::is_directory(dir)) {
        return curves;
    }
    std::vector<fs::path> files;
    for (const auto & e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("curves_", 0) == 0 && e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto & f : files) {
        try {
            const json j = json::parse(read_file(f));
            for (const auto & c : j.at("curves")) {
                AccuracyCurve curve;
                curve.layer = c.at("layer").get<size_t>();
                curve.test_ids = c.at("test_ids").get<std::vector<std::string>>();
                for (const auto & pt : c.at("points")) {
                    curve.points.push_back({pt.at("train_size").get<size_t>(), pt.at("test_accuracy").get<double>()});
                }
                curves.push_back(std::move(curve));
            }
        } catch (const json::exception & e) {
            throw data_error("bad curve file " + f.string() + ": " + e.what());
        }
    }
    return curves;
}

// ---- experiment runs ------------------------------------------------------

std::vector<TaskRecord> records_from_jsonl(std::string_view text) {
    std::vector<TaskRecord> records;
    std::set<std::string> seen;
    for_each_jsonl(text, "records", [&](const json & j) {
        TaskRecord r{j.at("id").get<std::string>(), j.at("input").get<std::string>(),
                     j.at("reference").get<std::string>()};
        if (!seen.insert(r.id).second) {
            throw data_error("duplicate record id " + r.id);
        }
        records.push_back(std::move(r));
    });
    return records;
}

ExperimentConfig parse_config(std::string_view text, const fs::path & base_dir) {
    auto resolve = [&](const std::string & p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    try {
        const json j = json::parse(text);
        ExperimentConfig c;
        const auto & model = j.at("model");
        if (model.is_string()) {
            c.model_path = resolve(model.get<std::string>());
        } else {
            auto & mc = c.model_config;
            mc.d_model = model.value("d_model", mc.d_model);
            mc.n_layers = model.value("n_layers", mc.n_layers);
            mc.n_heads = model.value("n_heads", mc.n_heads);
            mc.ff_mult = model.value("ff_mult", mc.ff_mult);
            mc.max_seq = model.value("max_seq", mc.max_seq);
            mc.seed = model.value("seed", mc.seed);
        }
        const auto concept_kind = parse_concept(j.at("concept").get<std::string>());
        if (!concept_kind) {
            throw data_error("config: unknown concept " + j.at("concept").get<std::string>());
        }
        c.concept_kind = *concept_kind;
        c.records = resolve(j.at("records").get<std::string>());
        c.instruction = j.value("instruction", std::string());
        c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
        c.probes = resolve(j.at("probes").get<std::string>());
        c.probe_root = j.contains("probe_root") ? resolve(j.at("probe_root").get<std::string>()) : c.probes;
        c.split_seed = j.value("split_seed", c.split_seed);
        if (j.contains("steering")) {
            const auto & s = j.at("steering");
            c.target_against = s.value("target_against", c.target_against);
            c.target_toward = s.value("target_toward", c.target_toward);
            if (s.contains("threshold")) {
                const auto & t = s.at("threshold");
                if (t.is_string()) {
                    if (t.get<std::string>() != "auto") {
                        throw data_error("config: threshold must be a number or \"auto\"");
                    }
                    c.threshold.reset();
                } else {
                    c.threshold = t.get<double>();
                }
            }
            const std::string scope = s.value("scope", std::string("all"));
            if (scope == "all") {
                c.scope = tinylm::HookScope::AllSteps;
            } else if (scope == "prompt") {
                c.scope = tinylm::HookScope::PromptOnly;
            } else {
                throw data_error("config: scope must be \"all\" or \"prompt\"");
            }
        }
        if (j.contains("metrics")) {
            c.metrics = j.at("metrics").get<std::vector<std::string>>();
            for (const auto & m : c.metrics) {
                if (std::find(metrics::kAllMetrics.begin(), metrics::kAllMetrics.end(), m) ==
                    metrics::kAllMetrics.end()) {
                    throw data_error("config: unknown metric " + m);
                }
            }
        }
        c.output_dir = resolve(j.at("output_dir").get<std::string>());
        return c;
    } catch (const json::exception & e) {
        throw data_error(std::string("config: ") + e.what());
    }
}

std::string config_to_json(const ExperimentConfig & c) {
    json j;
    if (c.model_path) {
        j["model"] = c.model_path->generic_string();
    } else {
        const auto & m = c.model_config;
        j["model"] = {{"d_model", m.d_model}, {"n_layers", m.n_layers}, {"n_heads", m.n_heads},
                      {"ff_mult", m.ff_mult}, {"max_seq", m.max_seq},   {"seed", m.seed}};
    }
    j["concept"] = to_string(c.concept_kind);
    j["records"] = c.records.generic_string();
    j["instruction"] = c.instruction;
    j["max_new_tokens"] = c.max_new_tokens;
    j["probes"] = c.probes.generic_string();
    j["probe_root"] = c.probe_root.generic_string();
    j["split_seed"] = c.split_seed;
    j["steering"] = {{"target_against", c.target_against},
                     {"target_toward", c.target_toward},
                     {"threshold", c.threshold ? json(*c.threshold) : json("auto")},
                     {"scope", c.scope == tinylm::HookScope::AllSteps ? "all" : "prompt"}};
    j["metrics"] = c.metrics;
    j["output_dir"] = c.output_dir.generic_string();
    return j.dump(2);
}

double resolve_threshold(const ExperimentConfig & config) {
    if (config.threshold) {
        return *config.threshold;
    }
    const auto tables = collect_accuracy_tables(config.probe_root);
    if (tables.empty()) {
        throw data_error("threshold \"auto\" needs at least one probe store under " + config.probe_root.string());
    }
    return dynamic_threshold(tables);
}

namespace {

json manifest_json(const RunManifest & m) {
    json stages = json::array();
    for (const auto & s : m.stages) {
        stages.push_back({{"stage", s.name}, {"status", s.status}, {"detail", s.detail}});
    }
    return {
        {"tool_version", m.tool_version},
        {"config", json::parse(m.config_json)},
        {"input_hashes", m.input_hashes},
        {"output_hashes", m.output_hashes},
        {"started_at", m.started_at},
        {"finished_at", m.finished_at},
        {"stages", stages},
        {"status", m.ok ? "ok" : "failed"},
    };
}

std::string prompt_for(const ExperimentConfig & c, const std::string & code) {
    if (c.instruction.empty()) {
        return code;
    }
    return c.instruction + "\n\n```java\n" + code + "\n```";
}

} // namespace

RunManifest run_experiment(const ExperimentConfig & config) {
    RunManifest manifest;
    manifest.started_at = utc_now();
    manifest.config_json = config_to_json(config);
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir);

    std::string current;
    auto stage_ok = [&](std::string detail = {}) { manifest.stages.push_back({current, "ok", std::move(detail)}); };
    auto finish = [&] {
        manifest.finished_at = utc_now();
        write_file_atomic(out_dir / "manifest.json", dump_pretty(manifest_json(manifest)));
    };

    try {
        current = "validate";
        if (config.model_path && !fs::exists(*config.model_path)) {
            throw data_error("model file not found: " + config.model_path->string());
        }
        if (!fs::exists(config.records)) {
            throw data_error("records file not found: " + config.records.string());
        }
        if (!fs::is_directory(config.probes)) {
            throw data_error("probe directory not found: " + config.probes.string());
        }
        stage_ok();

        current = "load";
        tinylm::Model model;
        if (config.model_path) {
            const std::string bytes = read_file(*config.model_path);
            manifest.input_hashes["model"] = content_hash(bytes);
            model = tinylm::load_model(*config.model_path);
        } else {
            model = tinylm::init_model(config.model_config);
        }
        const std::string record_bytes = read_file(config.records);
        manifest.input_hashes["records"] = content_hash(record_bytes);
        const auto records = records_from_jsonl(record_bytes);
        if (records.empty()) {
            throw data_error("records file is empty: " + config.records.string());
        }
        auto probes = load_probe_store(config.probes, config.concept_kind);
        if (probes.empty()) {
            throw data_error("no probes for concept " + std::string(to_string(config.concept_kind)) + " in " +
                             config.probes.string());
        }
        {
            std::string joined;
            for (const auto & [layer, p] : probes) {
                joined += read_file(config.probes / probe_filename(p.concept_kind, layer));
            }
            manifest.input_hashes["probes"] = content_hash(joined);
        }
        stage_ok(std::to_string(records.size()) + " records, " + std::to_string(probes.size()) + " probes");

        current = "threshold";
        const double threshold = resolve_threshold(config);
        stage_ok((config.threshold ? "fixed " : "auto ") + std::to_string(threshold));

        current = "generate";
        SteeringPlan against{config.concept_kind, SteeringDirection::Against, config.target_against, threshold, probes,
                             config.scope};
        SteeringPlan toward{config.concept_kind, SteeringDirection::Toward, config.target_toward, threshold,
                            std::move(probes), config.scope};
        validate(against);
        validate(toward);

        struct Job {
            size_t record;
            size_t setting;
        };
        std::vector<Job> jobs;
        std::vector<std::string> stripped(records.size());
        for (size_t r = 0; r < records.size(); ++r) {
            stripped[r] = strip_concept(records[r].input, config.concept_kind);
            for (size_t s = 0; s < kSettings.size(); ++s) {
                jobs.push_back({r, s});
            }
        }
        std::vector<std::string> outputs(jobs.size());
        parallel_for(jobs.size(), [&](size_t i) {
            const auto & job = jobs[i];
            const bool use_stripped = job.setting == 1 || job.setting == 3;
            const std::string prompt =
                prompt_for(config, use_stripped ? stripped[job.record] : records[job.record].input);
            const SteeringPlan * plan = job.setting == 2 ? &against : job.setting == 3 ? &toward : nullptr;
            outputs[i] = generate(model, prompt, config.max_new_tokens, plan);
        });
        std::string generations;
        for (size_t i = 0; i < jobs.size(); ++i) {
            generations += dump_line({{"id", records[jobs[i].record].id},
                                      {"setting", kSettings[jobs[i].setting]},
                                      {"output", outputs[i]}});
            generations += '\n';
        }
        write_file_atomic(out_dir / "generations.jsonl", generations);
        manifest.output_hashes["generations.jsonl"] = content_hash(generations);
        stage_ok(std::to_string(jobs.size()) + " generations");

        current = "metrics";
        std::map<std::string, metrics::MetricReport> per_setting;
        for (size_t s = 0; s < kSettings.size(); ++s) {
            std::vector<std::string> ids, cands, refs;
            for (size_t i = 0; i < jobs.size(); ++i) {
                if (jobs[i].setting != s) continue;
                ids.push_back(records[jobs[i].record].id);
                cands.push_back(outputs[i]);
                refs.push_back(records[jobs[i].record].reference);
            }
            per_setting[kSettings[s]] = metrics::evaluate(ids, cands, refs, config.metrics);
        }
        std::string metric_rows;
        for (const auto & setting : kSettings) {
            const auto & rep = per_setting.at(setting);
            for (size_t i = 0; i < rep.ids.size(); ++i) {
                metric_rows += dump_line({{"id", rep.ids[i]}, {"setting", setting}, {"metrics", rep.per_record[i]}});
                metric_rows += '\n';
            }
        }
        write_file_atomic(out_dir / "metrics.jsonl", metric_rows);
        manifest.output_hashes["metrics.jsonl"] = content_hash(metric_rows);
        stage_ok();

        current = "deltas";
        json aggregates = json::object();
        for (const auto & setting : kSettings) {
            aggregates[setting] = per_setting.at(setting).aggregate;
        }
        json deltas = json::object();
        const auto & base = per_setting.at("original").aggregate;
        for (const auto & setting : kSettings) {
            if (setting == "original") continue;
            json row = json::object();
            for (const auto & m : config.metrics) {
                const double orig = base.at(m);
                const double mod = per_setting.at(setting).aggregate.at(m);
                row[m] = orig == 0.0 ? json(nullptr) : json(metrics::relative_delta(mod, orig));
            }
            deltas[setting] = row;
        }
        const std::string deltas_text = dump_pretty({{"threshold", threshold},
                                                     {"qualifying_layers", qualifying_layers(against)},
                                                     {"aggregates", aggregates},
                                                     {"relative_delta_percent", deltas},
                                                     {"baseline", "original"}});
        write_file_atomic(out_dir / "deltas.json", deltas_text);
        manifest.output_hashes["deltas.json"] = content_hash(deltas_text);
        stage_ok();
    } catch (const std::exception & e) {
        manifest.stages.push_back({current, "failed", e.what()});
        manifest.ok = false;
        finish();
        throw;
    }
    manifest.ok = true;
    finish();
    return manifest;
}

// ---- reports --------------------------------------------------------------

namespace {

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string csv_cell(const json & v) {
    if (v.is_null()) return "";
    if (v.is_number()) {
        std::ostringstream os;
        os.precision(17);
        os << v.get<double>();
        return os.str();
    }
    return v.dump();
}

} // namespace

std::vector<fs::path> report(const std::vector<fs::path> & run_dirs, const fs::path & out_dir) {
    if (run_dirs.empty()) {
        throw data_error("report: no run directories given");
    }
    struct Run {
        std::string name;
        json manifest;
        json deltas;
        fs::path dir;
    };
    std::vector<Run> runs;
    for (const auto & dir : run_dirs) {
        const fs::path mpath = dir / "manifest.json";
        if (!fs::exists(mpath)) {
            throw data_error("report: missing manifest in " + dir.string());
        }
        Run r;
        r.dir = dir;
        r.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
        try {
            r.manifest = json::parse(read_file(mpath));
            if (fs::exists(dir / "deltas.json")) {
                r.deltas = json::parse(read_file(dir / "deltas.json"));
            }
        } catch (const json::exception & e) {
            throw data_error("report: unreadable run files in " + dir.string() + ": " + e.what());
        }
        runs.push_back(std::move(r));
    }

    std::ostringstream md;
    std::ostringstream csv;
    csv.precision(17);
    csv << "section,run,row,column,value\n";
    md << "# Experiment report\n\n";
    md << "| run | status | concept | started | finished |\n|---|---|---|---|---|\n";
    for (const auto & r : runs) {
        md << "| " << r.name << " | " << r.manifest.value("status", "?") << " | "
           << r.manifest["config"].value("concept", "?") << " | " << r.manifest.value("started_at", "") << " | "
           << r.manifest.value("finished_at", "") << " |\n";
    }

    // probe accuracy by layer and accuracy curves, once per distinct probe dir
    std::set<std::string> seen_probe_dirs;
    for (const auto & r : runs) {
        const std::string pdir = r.manifest["config"].value("probes", "");
        if (pdir.empty() || !seen_probe_dirs.insert(pdir).second || !fs::is_directory(pdir)) {
            continue;
        }
        const auto probes = load_probe_store(pdir);
        md << "\n## Probe accuracy by layer (" << pdir << ")\n\n| layer | test accuracy | train size |\n|---|---|---|\n";
        for (const auto & [layer, p] : probes) {
            md << "| " << layer << " | " << fmt(p.test_accuracy) << " | " << p.train_size << " |\n";
            csv << "probe_accuracy," << r.name << ',' << layer << ",test_accuracy," << p.test_accuracy << '\n';
        }
        const auto curves = load_curves(pdir);
        if (!curves.empty()) {
            md << "\n## Accuracy vs train size (" << pdir << ")\n\n| layer |";
            for (const auto & pt : curves.front().points) md << ' ' << pt.train_size << " |";
            md << "\n|---|";
            for (size_t i = 0; i < curves.front().points.size(); ++i) md << "---|";
            md << '\n';
            for (const auto & c : curves) {
                md << "| " << c.layer << " |";
                for (const auto & pt : c.points) {
                    md << ' ' << fmt(pt.test_accuracy) << " |";
                    csv << "accuracy_curve," << r.name << ',' << c.layer << ',' << pt.train_size << ','
                        << pt.test_accuracy << '\n';
                }
                md << '\n';
            }
        }
    }

    // steering deltas: one column per run
    md << "\n## Relative deltas vs original (%)\n\n| setting / metric |";
    for (const auto & r : runs) md << ' ' << r.name << " |";
    md << "\n|---|";
    for (size_t i = 0; i < runs.size(); ++i) md << "---|";
    md << '\n';
    std::set<std::pair<std::string, std::string>> rows;
    for (const auto & r : runs) {
        if (!r.deltas.contains("relative_delta_percent")) continue;
        for (const auto & [setting, metrics_row] : r.deltas["relative_delta_percent"].items()) {
            for (const auto & [metric, v] : metrics_row.items()) {
                rows.insert({setting, metric});
                csv << "relative_delta," << r.name << ',' << setting << ',' << metric << ',' << csv_cell(v) << '\n';
            }
        }
    }
    for (const auto & [setting, metric] : rows) {
        md << "| " << setting << " / " << metric << " |";
        for (const auto & r : runs) {
            const json * v = nullptr;
            if (r.deltas.contains("relative_delta_percent") && r.deltas["relative_delta_percent"].contains(setting) &&
                r.deltas["relative_delta_percent"][setting].contains(metric)) {
                v = &r.deltas["relative_delta_percent"][setting][metric];
            }
            if (!v) md << " - |";
            else if (v->is_null()) md << " undefined |";
            else md << ' ' << fmt(v->get<double>(), 2) << " |";
        }
        md << '\n';
    }

    // activation profiles, when a run directory has one
    for (const auto & r : runs) {
        const fs::path ppath = r.dir / "profile.json";
        if (!fs::exists(ppath)) continue;
        json profile;
        try {
            profile = json::parse(read_file(ppath));
        } catch (const json::exception & e) {
            throw data_error("report: bad profile " + ppath.string() + ": " + e.what());
        }
        md << "\n## Activation profile (" << r.name << ")\n\n| task | layer | mean | n |\n|---|---|---|---|\n";
        for (const auto & [task, layers] : profile.items()) {
            if (task == "_skipped") continue;
            for (const auto & [layer, cell] : layers.items()) {
                md << "| " << task << " | " << layer << " | " << fmt(cell.at("mean").get<double>()) << " | "
                   << cell.at("n").get<size_t>() << " |\n";
                csv << "activation," << r.name << ',' << task << ',' << layer << ','
                    << cell.at("mean").get<double>() << '\n';
            }
        }
    }

    const fs::path md_path = out_dir / "report.md";
    const fs::path csv_path = out_dir / "report.csv";
    write_file_atomic(md_path, md.str());
    write_file_atomic(csv_path, csv.str());
    return {md_path, csv_path};
}

} // namespace commentcav
