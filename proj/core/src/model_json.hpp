#pragma once

#include <json.hpp>

#include "seqsense/detectors.hpp"

namespace seqsense::detail {

inline nlohmann::json model_to_json(const DetectorModel& model) {
    nlohmann::json j;
    std::visit(
        [&j](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, EnergyDetectorParams>) {
                j = {{"type", "energy"}, {"theta", p.theta}};
            } else if constexpr (std::is_same_v<T, SpectralShapeParams>) {
                j = {{"type", "spectral"},
                     {"ar_coeffs", p.ar_coeffs},
                     {"sigma_w2", p.sigma_w2},
                     {"sigma_v2", p.sigma_v2}};
            } else if constexpr (std::is_same_v<T, GaussianDetectorParams>) {
                j = {{"type", "gaussian"}, {"rho2", p.rho2}, {"sigma_w2", p.sigma_w2}};
            } else if constexpr (std::is_same_v<T, ConstantLlrParams>) {
                j = {{"type", "constant"}, {"value", p.value}};
            } else {
                j = {{"type", "bernoulli"}, {"step", p.step}};
            }
        },
        model);
    return j;
}

inline DetectorModel model_from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    DetectorModel model;
    if (type == "energy") {
        model = EnergyDetectorParams{j.at("theta").get<double>()};
    } else if (type == "spectral") {
        model = SpectralShapeParams{j.at("ar_coeffs").get<std::vector<double>>(),
                                    j.at("sigma_w2").get<double>(),
                                    j.at("sigma_v2").get<double>()};
    } else if (type == "gaussian") {
        model = GaussianDetectorParams{j.at("rho2").get<double>(),
                                       j.at("sigma_w2").get<double>()};
    } else if (type == "constant") {
        model = ConstantLlrParams{j.at("value").get<double>()};
    } else if (type == "bernoulli") {
        model = BernoulliLlrParams{j.at("step").get<double>()};
    } else {
        throw std::invalid_argument("unknown detector model type: " + type);
    }
    validate_model(model);
    return model;
}

}  // namespace seqsense::detail
