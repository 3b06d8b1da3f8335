#include "commentcav/steering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace commentcav {

const char * to_string(SteeringDirection d) {
    return d == SteeringDirection::Toward ? "toward" : "against";
}

std::optional<SteeringDirection> parse_direction(std::string_view name) {
    if (name == "toward") return SteeringDirection::Toward;
    if (name == "against") return SteeringDirection::Against;
    return std::nullopt;
}

double default_target(SteeringDirection d) {
    return d == SteeringDirection::Toward ? kActivationTarget : kDeactivationTarget;
}

void validate(const SteeringPlan & plan) {
    if (!(plan.target_p > 0.0 && plan.target_p < 1.0)) {
        throw std::invalid_argument("steering plan: target_p must lie in (0, 1)");
    }
    if (!(plan.threshold_t >= 0.0 && plan.threshold_t <= 1.0)) {
        throw std::invalid_argument("steering plan: threshold must lie in [0, 1]");
    }
}

std::vector<size_t> qualifying_layers(const SteeringPlan & plan) {
    std::vector<size_t> layers;
    for (const auto & [layer, probe] : plan.probes) {
        if (probe.test_accuracy > plan.threshold_t) {
            layers.push_back(layer);
        }
    }
    return layers;
}

bool direction_condition(double p, double target_p, SteeringDirection direction) {
    return (p > target_p && direction == SteeringDirection::Against) ||
           (p < target_p && direction == SteeringDirection::Toward);
}

bool should_perturb(const Probe & probe, std::span<const double> e, const SteeringPlan & plan, size_t layer) {
    if (!plan.probes.count(layer)) {
        throw std::out_of_range("should_perturb: no probe for layer " + std::to_string(layer));
    }
    if (!(probe.test_accuracy > plan.threshold_t)) {
        return false;
    }
    return direction_condition(predict(probe, e), plan.target_p, plan.direction);
}

namespace {

double weight_norm(const Probe & probe) {
    double s = 0.0;
    for (double x : probe.w) {
        s += x * x;
    }
    const double n = std::sqrt(s);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("steering: probe weight vector is zero");
    }
    return n;
}

} // namespace

double epsilon(const Probe & probe, std::span<const double> e, double target_p, SteeringDirection direction) {
    const double norm = weight_norm(probe);
    const double p = predict(probe, e);
    if (p == target_p) {
        return 0.0;
    }
    if (!direction_condition(p, target_p, direction)) {
        throw std::invalid_argument(std::string("epsilon: probability ") + std::to_string(p) + " is already " +
                                    (direction == SteeringDirection::Against ? "at or below" : "at or above") +
                                    " the target " + std::to_string(target_p));
    }
    double z = probe.b;
    for (size_t i = 0; i < e.size(); ++i) {
        z += probe.w[i] * e[i];
    }
    return std::abs(logit(target_p) - z) / norm;
}

Vector perturb(const Probe & probe, std::span<const double> e, double target_p, SteeringDirection direction) {
    const double eps = epsilon(probe, e, target_p, direction);
    Vector out(e.begin(), e.end());
    if (eps == 0.0) {
        return out;
    }
    const double norm = weight_norm(probe);
    const double sign = direction == SteeringDirection::Toward ? 1.0 : -1.0;
    auto apply = [&](double step) {
        for (size_t i = 0; i < out.size(); ++i) {
            out[i] = e[i] + step * sign * probe.w[i] / norm;
        }
    };
    apply(eps);
    // Rounding can leave the result a hair on the firing side of the target;
    // extend the step by a few ulps until it is not.
    double step = eps;
    double bump = std::max(eps * 0x1.0p-52, std::numeric_limits<double>::denorm_min());
    for (int k = 0; k < 64 && direction_condition(predict(probe, out), target_p, direction); ++k) {
        step += bump;
        bump *= 2.0;
        apply(step);
    }
    return out;
}

Vector steer_layer_pass(const SteeringPlan & plan, size_t layer, std::span<const double> e) {
    const auto it = plan.probes.find(layer);
    if (it == plan.probes.end() || !should_perturb(it->second, e, plan, layer)) {
        return Vector(e.begin(), e.end());
    }
    return perturb(it->second, e, plan.target_p, plan.direction);
}

tinylm::LayerHook make_hook(const SteeringPlan & plan) {
    validate(plan);
    return [&plan](size_t layer, std::span<double> state) {
        const auto it = plan.probes.find(layer);
        if (it == plan.probes.end() || !should_perturb(it->second, state, plan, layer)) {
            return;
        }
        const Vector moved = perturb(it->second, state, plan.target_p, plan.direction);
        std::copy(moved.begin(), moved.end(), state.begin());
    };
}

std::string generate(const tinylm::Model & model, std::string_view prompt, size_t max_new_tokens,
                     const SteeringPlan * plan) {
    if (!plan) {
        return tinylm::generate(model, prompt, max_new_tokens);
    }
    const tinylm::LayerHook hook = make_hook(*plan);
    return tinylm::generate(model, prompt, max_new_tokens, &hook, plan->scope);
}

} // namespace commentcav
