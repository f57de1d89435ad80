#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "numod/adam.hpp"
#include "numod/gfcn.hpp"
#include "numod/invariant.hpp"
#include "numod/trainer.hpp"

namespace numod {

// Checkpoint layout (JSON object), version 1:
//   format        "numod-checkpoint"
//   version       1
//   width, height, channels
//   config        TrainConfig fields
//   invariant     {theta, wiener_window, wiener_noise (null = estimated), epsilon_log}
//   net1, net2    {latent, hidden1, hidden2, output, layout, values[]}
//                 values hold w1,b1,w2,b2,w3,b3 back to back, each matrix column-major
//   adam1, adam2  {step, lr, beta1, beta2, eps, first_moment[], second_moment[]}
inline constexpr const char* kCheckpointFormat = "numod-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

inline nlohmann::json to_json(const GfcnParams& p) {
    const GfcnShape& s = p.shape();
    return {{"latent", s.latent}, {"hidden1", s.hidden1}, {"hidden2", s.hidden2}, {"output", s.output},
            {"layout", "w1,b1,w2,b2,w3,b3;column-major"}, {"values", vector_to_json(p.flat())}};
}

inline GfcnParams gfcn_from_json(const nlohmann::json& j) {
    GfcnShape s{j.at("latent").get<int>(), j.at("hidden1").get<int>(), j.at("hidden2").get<int>(), j.at("output").get<int>()};
    GfcnParams p(s);
    Eigen::VectorXd v = vector_from_json(j.at("values"));
    if(v.size() != p.flat().size())
        throw Error("checkpoint: parameter array has " + std::to_string(v.size()) + " values, expected " + std::to_string(p.flat().size()));
    p.flat() = std::move(v);
    if(!p.all_finite())
        throw Error("checkpoint: non-finite parameter values");
    return p;
}

inline nlohmann::json to_json(const AdamState& a) {
    return {{"step", a.step}, {"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps},
            {"first_moment", vector_to_json(a.first_moment)}, {"second_moment", vector_to_json(a.second_moment)}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
    AdamState a;
    a.step = j.at("step").get<std::int64_t>();
    a.lr = j.at("lr").get<double>();
    a.beta1 = j.at("beta1").get<double>();
    a.beta2 = j.at("beta2").get<double>();
    a.eps = j.at("eps").get<double>();
    a.first_moment = vector_from_json(j.at("first_moment"));
    a.second_moment = vector_from_json(j.at("second_moment"));
    if(a.first_moment.size() != a.second_moment.size())
        throw Error("checkpoint: Adam moment vectors differ in length");
    return a;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"latent", c.latent}, {"hidden1", c.hidden1}, {"hidden2", c.hidden2}, {"lambda", c.lambda}, {"lr", c.lr},
            {"epochs", c.epochs}, {"minibatch_frames", c.minibatch_frames}, {"seed", c.seed}, {"online_stream", c.online_stream},
            {"online_iterations", c.online_iterations}, {"pretrain_fraction", c.pretrain_fraction}, {"threshold_factor", c.threshold_factor},
            {"threshold_floor", c.threshold_floor}, {"latent_init_std", c.latent_init_std}, {"prior_mode", to_string(c.prior_mode)}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.latent = j.at("latent").get<int>();
    c.hidden1 = j.at("hidden1").get<int>();
    c.hidden2 = j.at("hidden2").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.minibatch_frames = j.at("minibatch_frames").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.online_stream = j.at("online_stream").get<int>();
    c.online_iterations = j.at("online_iterations").get<int>();
    c.pretrain_fraction = j.at("pretrain_fraction").get<double>();
    c.threshold_factor = j.at("threshold_factor").get<double>();
    c.threshold_floor = j.at("threshold_floor").get<double>();
    c.latent_init_std = j.at("latent_init_std").get<double>();
    c.prior_mode = prior_mode_from_string(j.at("prior_mode").get<std::string>());
    c.validate();
    return c;
}

inline nlohmann::json to_json(const InvariantModel& m) {
    nlohmann::json j = {{"theta", m.theta}, {"wiener_window", m.wiener_window}, {"epsilon_log", m.epsilon_log}};
    j["wiener_noise"] = m.wiener_noise ? nlohmann::json(*m.wiener_noise) : nlohmann::json(nullptr);
    return j;
}

inline InvariantModel invariant_from_json(const nlohmann::json& j) {
    InvariantModel m;
    m.theta = j.at("theta").get<double>();
    m.wiener_window = j.at("wiener_window").get<int>();
    m.epsilon_log = j.at("epsilon_log").get<double>();
    if(!j.at("wiener_noise").is_null())
        m.wiener_noise = j.at("wiener_noise").get<double>();
    m.validate();
    return m;
}

inline nlohmann::json to_json(const NumodModel& model) {
    return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion},
            {"width", model.width}, {"height", model.height}, {"channels", model.channels},
            {"config", to_json(model.config)}, {"invariant", to_json(model.invariant)},
            {"net1", to_json(model.net1)}, {"net2", to_json(model.net2)},
            {"adam1", to_json(model.adam1)}, {"adam2", to_json(model.adam2)}};
}

inline NumodModel model_from_json(const nlohmann::json& j) {
    if(j.value("format", std::string()) != kCheckpointFormat)
        throw Error("checkpoint: not a numod checkpoint");
    if(j.at("version").get<int>() != kCheckpointVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(j.at("version").get<int>()));
    NumodModel m;
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.channels = j.at("channels").get<int>();
    m.config = config_from_json(j.at("config"));
    m.invariant = invariant_from_json(j.at("invariant"));
    m.net1 = gfcn_from_json(j.at("net1"));
    m.net2 = gfcn_from_json(j.at("net2"));
    m.adam1 = adam_from_json(j.at("adam1"));
    m.adam2 = adam_from_json(j.at("adam2"));
    const Eigen::Index pixels = Eigen::Index(m.width) * m.height;
    if(m.net1.shape().output != pixels * m.channels || m.net2.shape().output != pixels)
        throw Error("checkpoint: network output sizes do not match the stored frame geometry");
    if(m.net1.shape().latent != m.config.latent || m.net2.shape().latent != m.config.latent)
        throw Error("checkpoint: latent size does not match the stored config");
    if(m.adam1.size() != m.net1.flat().size() || m.adam2.size() != m.net2.flat().size())
        throw Error("checkpoint: Adam state does not match network size");
    return m;
}

inline void save_checkpoint(const NumodModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if(!out)
        throw Error("cannot write checkpoint: " + path.string());
    out << to_json(model).dump() << '\n';
    if(!out)
        throw Error("failed writing checkpoint: " + path.string());
}

inline NumodModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if(!in)
        throw Error("cannot read checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        return model_from_json(j);
    } catch(const nlohmann::json::exception& e) {
        throw Error("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

} // namespace numod
