#pragma once

#include "commentcav/probes.hpp"
#include "commentcav/tinylm.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace commentcav {

struct TaskSpec {
    std::string id;
    std::string instruction;
};

struct TaskPrompt {
    std::string task_id;
    std::string instruction;
    std::string code;
    std::string rendered;
};

// The ten task formulations with zero-shot instructions.
std::vector<TaskSpec> builtin_tasks();
// JSON array of {"id", "instruction"}; overrides the builtin list.
std::vector<TaskSpec> load_tasks(const std::filesystem::path & file);

// Instruction, blank line, then the code in a ```java fence.
std::string render_prompt(const TaskSpec & task, const std::string & code);

// Task-major grid: every code once per task. Throws std::invalid_argument on
// an empty task or code list.
std::vector<TaskPrompt> build_grid(const std::vector<TaskSpec> & tasks, const std::vector<std::string> & codes);

struct ActivationCell {
    double mean = 0.0;
    double stddev = 0.0;
    size_t n = 0;
};

struct ActivationProfile {
    std::vector<std::string> task_order;
    std::map<std::string, std::map<size_t, ActivationCell>> cells; // task -> layer -> cell
    std::map<std::string, size_t> skipped;                         // prompts over max_seq, per task
};

ActivationProfile activation_profile(const tinylm::Model & model, const std::map<size_t, Probe> & probes,
                                     const std::vector<TaskPrompt> & prompts);

// {task: {layer: {mean, stddev, n}}, "_skipped": {task: count}}
std::string profile_to_json(const ActivationProfile & profile);
// task,layer,mean,stddev,n
std::string profile_to_csv(const ActivationProfile & profile);

} // namespace commentcav
