#pragma once

#include "commentcav/probes.hpp"
#include "commentcav/tinylm.hpp"

#include <map>
#include <optional>
#include <span>
#include <string_view>

namespace commentcav {

// Toward = concept activation, Against = concept deactivation.
enum class SteeringDirection { Toward, Against };

const char * to_string(SteeringDirection d);
std::optional<SteeringDirection> parse_direction(std::string_view name);

inline constexpr double kDeactivationTarget = 0.01;
inline constexpr double kActivationTarget = 0.99;

double default_target(SteeringDirection d);

struct SteeringPlan {
    ConceptKind concept_kind = ConceptKind::Comment;
    SteeringDirection direction = SteeringDirection::Against;
    double target_p = kDeactivationTarget;
    double threshold_t = 0.84;
    std::map<size_t, Probe> probes; // by 1-based layer
    tinylm::HookScope scope = tinylm::HookScope::AllSteps;
};

// Throws std::invalid_argument when target_p or threshold_t is out of range.
void validate(const SteeringPlan & plan);

// Layers whose probe accuracy strictly exceeds the threshold.
std::vector<size_t> qualifying_layers(const SteeringPlan & plan);

// (P > P_t and Against) or (P < P_t and Toward)
bool direction_condition(double p, double target_p, SteeringDirection direction);

// Layer gate plus direction condition. Throws std::out_of_range when the plan
// has no probe for the layer.
bool should_perturb(const Probe & probe, std::span<const double> e, const SteeringPlan & plan, size_t layer);

// Step length along the signed CAV that lands on probability target_p:
// |logit(target_p) - (w.e + b)| / |w|. Zero when the probability already equals
// the target. Throws std::invalid_argument for a zero weight vector or when the
// direction condition is violated.
double epsilon(const Probe & probe, std::span<const double> e, double target_p, SteeringDirection direction);

// e + epsilon * v. The result never satisfies the direction condition again,
// so a second application is a no-op.
Vector perturb(const Probe & probe, std::span<const double> e, double target_p, SteeringDirection direction);

// One step of the layer loop: perturb when should_perturb holds, else return e.
Vector steer_layer_pass(const SteeringPlan & plan, size_t layer, std::span<const double> e);

// Hook for tinylm that applies steer_layer_pass in place. The plan must
// outlive the hook.
tinylm::LayerHook make_hook(const SteeringPlan & plan);

std::string generate(const tinylm::Model & model, std::string_view prompt, size_t max_new_tokens,
                     const SteeringPlan * plan);

} // namespace commentcav
