#include "commentcav/profiler.hpp"

#include "commentcav/util.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace commentcav {

using json = nlohmann::json;

std::vector<TaskSpec> builtin_tasks() {
    return {
        {"code_summarization", "Summarize what the following code snippet does."},
        {"code_translation", "Translate the following Java code snippet into Python."},
        {"test_generation", "Write unit tests for the following code snippet."},
        {"code_completion", "Complete the following code snippet."},
        {"fault_localization", "Identify the lines of the following code snippet that contain a fault."},
        {"program_repair", "Fix the bug in the following code snippet to make it work as intended."},
        {"vulnerability_detection", "Determine whether the following code snippet contains a security vulnerability."},
        {"code_review", "Review the following code snippet and point out any issues."},
        {"code_refactoring", "Refactor the following code snippet to improve its readability and structure."},
        {"code_documentation", "Write documentation for the following code snippet."},
    };
}

std::vector<TaskSpec> load_tasks(const std::filesystem::path & file) {
    try {
        const json j = json::parse(read_file(file));
        std::vector<TaskSpec> tasks;
        std::set<std::string> seen;
        for (const auto & item : j) {
            TaskSpec t{item.at("id").get<std::string>(), item.at("instruction").get<std::string>()};
            if (!seen.insert(t.id).second) {
                throw data_error("duplicate task id " + t.id + " in " + file.string());
            }
            tasks.push_back(std::move(t));
        }
        if (tasks.empty()) {
            throw data_error("task file lists no tasks: " + file.string());
        }
        return tasks;
    } catch (const json::exception & e) {
        throw data_error("bad task file " + file.string() + ": " + e.what());
    }
}

std::string render_prompt(const TaskSpec & task, const std::string & code) {
    return task.instruction + "\n\n```java\n" + code + "\n```";
}

std::vector<TaskPrompt> build_grid(const std::vector<TaskSpec> & tasks, const std::vector<std::string> & codes) {
    if (tasks.empty() || codes.empty()) {
        throw std::invalid_argument("build_grid: task and code lists must be non-empty");
    }
    std::vector<TaskPrompt> grid;
    grid.reserve(tasks.size() * codes.size());
    for (const auto & t : tasks) {
        for (const auto & c : codes) {
            grid.push_back({t.id, t.instruction, c, render_prompt(t, c)});
        }
    }
    return grid;
}

ActivationProfile activation_profile(const tinylm::Model & model, const std::map<size_t, Probe> & probes,
                                     const std::vector<TaskPrompt> & prompts) {
    for (const auto & [layer, probe] : probes) {
        if (layer < 1 || layer > model.config.n_layers || probe.w.size() != model.config.d_model) {
            throw std::invalid_argument("activation_profile: probe for layer " + std::to_string(layer) +
                                        " does not fit the model");
        }
    }
    // per prompt: layer -> activation, empty when skipped
    std::vector<std::map<size_t, double>> values(prompts.size());
    std::vector<char> skipped(prompts.size(), 0);
    parallel_for(prompts.size(), [&](size_t i) {
        const auto tokens = tinylm::tokenize(prompts[i].rendered);
        if (tokens.size() > model.config.max_seq) {
            skipped[i] = 1;
            return;
        }
        const auto trace = tinylm::forward_capture(model, tokens).trace;
        for (const auto & [layer, probe] : probes) {
            values[i][layer] = predict(probe, trace[layer - 1].vector);
        }
    });

    ActivationProfile profile;
    std::map<std::string, std::map<size_t, std::vector<double>>> samples;
    for (size_t i = 0; i < prompts.size(); ++i) {
        const auto & task = prompts[i].task_id;
        if (!profile.skipped.count(task)) {
            profile.task_order.push_back(task);
            profile.skipped[task] = 0;
            for (const auto & [layer, probe] : probes) {
                samples[task][layer];
            }
        }
        if (skipped[i]) {
            ++profile.skipped[task];
            continue;
        }
        for (const auto & [layer, v] : values[i]) {
            samples[task][layer].push_back(v);
        }
    }
    for (const auto & [task, layers] : samples) {
        for (const auto & [layer, xs] : layers) {
            ActivationCell cell;
            cell.n = xs.size();
            if (!xs.empty()) {
                const double n = static_cast<double>(xs.size());
                cell.mean = order_free_sum(xs) / n;
                std::vector<double> sq;
                sq.reserve(xs.size());
                for (double x : xs) {
                    sq.push_back((x - cell.mean) * (x - cell.mean));
                }
                cell.stddev = std::sqrt(order_free_sum(std::move(sq)) / n);
            }
            profile.cells[task][layer] = cell;
        }
    }
    return profile;
}

std::string profile_to_json(const ActivationProfile & profile) {
    json out = json::object();
    for (const auto & task : profile.task_order) {
        json layers = json::object();
        for (const auto & [layer, cell] : profile.cells.at(task)) {
            layers[std::to_string(layer)] = {{"mean", cell.mean}, {"stddev", cell.stddev}, {"n", cell.n}};
        }
        out[task] = layers;
    }
    json skipped = json::object();
    for (const auto & [task, count] : profile.skipped) {
        skipped[task] = count;
    }
    out["_skipped"] = skipped;
    return out.dump(2) + "\n";
}

std::string profile_to_csv(const ActivationProfile & profile) {
    std::ostringstream os;
    os.precision(17);
    os << "task,layer,mean,stddev,n\n";
    for (const auto & task : profile.task_order) {
        for (const auto & [layer, cell] : profile.cells.at(task)) {
            os << task << ',' << layer << ',' << cell.mean << ',' << cell.stddev << ',' << cell.n << '\n';
        }
    }
    return os.str();
}

} // namespace commentcav
