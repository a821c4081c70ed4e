#include "optexec/experiment_config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace optexec {

using nlohmann::json;

std::string_view to_string(ExperimentMode mode) {
    switch (mode) {
        case ExperimentMode::Oracle: return "oracle";
        case ExperimentMode::Baselines: return "baselines";
        case ExperimentMode::Train: return "train";
        case ExperimentMode::Ablation: return "ablation";
        case ExperimentMode::Online: return "online";
        case ExperimentMode::Eval: return "eval";
    }
    return "unknown";
}

ExperimentMode parse_experiment_mode(std::string_view name) {
    for (auto m : {ExperimentMode::Oracle, ExperimentMode::Baselines, ExperimentMode::Train, ExperimentMode::Ablation,
                   ExperimentMode::Online, ExperimentMode::Eval}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown experiment mode '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
    try {
        market.validate();
        trainer.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (experiment.seeds.empty()) throw ConfigError("seed list is empty");
    if (experiment.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(online.rho_start > 0.0) || !(online.rho_end > 0.0)) throw ConfigError("online rho endpoints must be > 0");
    if (online.episodes < 0 || online.eval_every < 0 || online.warmup < 0) {
        throw ConfigError("online episode counts must be >= 0");
    }
    if (!(online.epsilon >= 0.0 && online.epsilon <= 1.0)) throw ConfigError("online epsilon must lie in [0, 1]");
    if (!(online.sigma_eps >= 0.0)) throw ConfigError("online sigma_eps must be >= 0");
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"exp", "powerlaw", "linres-005", "linres-05"};
    return names;
}

ExperimentConfig preset_config(std::string_view name) {
    ExperimentConfig c;  // defaults are the exponential preset
    if (name == "exp") {
        c.market.kernel = {KernelFamily::Exponential, 1.0, 1.0};
        c.trainer.window = 15000;
    } else if (name == "powerlaw") {
        c.market.kernel = {KernelFamily::PowerLaw, 1.0, 1.0};
        c.trainer.window = 15000;
    } else if (name == "linres-005") {
        c.market.kernel = {KernelFamily::LinearResilience, 1.0, 0.05};
        c.trainer.window = 20000;
    } else if (name == "linres-05") {
        c.market.kernel = {KernelFamily::LinearResilience, 1.0, 0.5};
        c.trainer.window = 10000;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected exp|powerlaw|linres-005|linres-05)");
    }
    c.experiment.out_dir = "runs/" + std::string(name);
    return c;
}

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<json(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const json&)> set;
};

double as_double(const json& v) {
    if (!v.is_number()) throw ConfigError("expected a number, got " + v.dump());
    return v.get<double>();
}

std::int64_t as_int(const json& v) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError("expected an integer, got " + v.dump());
}

std::string as_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    throw ConfigError("expected a string, got " + v.dump());
}

std::vector<std::uint64_t> as_seed_list(const json& v) {
    std::vector<std::uint64_t> seeds;
    auto push = [&](std::int64_t s) {
        if (s < 0) throw ConfigError("seeds must be non-negative");
        seeds.push_back(static_cast<std::uint64_t>(s));
    };
    if (v.is_array()) {
        for (const auto& e : v) push(as_int(e));
    } else if (v.is_number()) {
        push(as_int(v));
    } else if (v.is_string()) {
        std::stringstream ss(v.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                push(std::stoll(item));
            } catch (const std::logic_error&) {
                throw ConfigError("bad seed '" + item + "'");
            }
        }
    } else {
        throw ConfigError("expected a seed list, got " + v.dump());
    }
    if (seeds.empty()) throw ConfigError("seed list is empty");
    return seeds;
}

template <class T>
Field num(const char* section, const char* key, T ExperimentConfig::*part, double T::*member) {
    return {section, key, [=](const ExperimentConfig& c) { return json((c.*part).*member); },
            [=](ExperimentConfig& c, const json& v) { (c.*part).*member = as_double(v); }};
}

template <class T, class I>
Field integer(const char* section, const char* key, T ExperimentConfig::*part, I T::*member) {
    return {section, key, [=](const ExperimentConfig& c) { return json((c.*part).*member); },
            [=](ExperimentConfig& c, const json& v) {
                const std::int64_t x = as_int(v);
                if constexpr (std::is_unsigned_v<I>) {
                    if (x < 0) throw ConfigError(std::string(key) + " must be non-negative");
                }
                (c.*part).*member = static_cast<I>(x);
            }};
}

const std::vector<Field>& fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        // market
        f.push_back(num("market", "p0", &C::market, &MarketConfig::p0));
        f.push_back(num("market", "sigma_w", &C::market, &MarketConfig::sigma_w));
        f.push_back(num("market", "x0", &C::market, &MarketConfig::x0));
        f.push_back(integer("market", "n_steps", &C::market, &MarketConfig::n_steps));
        f.push_back(num("market", "dt", &C::market, &MarketConfig::dt));
        f.push_back({"market", "kernel",
                     [](const C& c) { return json(std::string(to_string(c.market.kernel.family))); },
                     [](C& c, const json& v) {
                         try {
                             c.market.kernel.family = parse_kernel_family(as_string(v));
                         } catch (const DomainError& e) {
                             throw ConfigError(e.what());
                         }
                     }});
        f.push_back({"market", "kappa", [](const C& c) { return json(c.market.kernel.kappa); },
                     [](C& c, const json& v) { c.market.kernel.kappa = as_double(v); }});
        f.push_back({"market", "rho", [](const C& c) { return json(c.market.kernel.rho); },
                     [](C& c, const json& v) { c.market.kernel.rho = as_double(v); }});
        // trainer
        f.push_back(integer("trainer", "H", &C::trainer, &TrainerConfig::episodes));
        f.push_back(integer("trainer", "B", &C::trainer, &TrainerConfig::batch));
        f.push_back(integer("trainer", "D", &C::trainer, &TrainerConfig::window));
        f.push_back(num("trainer", "epsilon", &C::trainer, &TrainerConfig::epsilon));
        f.push_back(num("trainer", "theta_eps", &C::trainer, &TrainerConfig::ou_theta));
        f.push_back(num("trainer", "sigma_eps", &C::trainer, &TrainerConfig::ou_sigma));
        f.push_back(num("trainer", "lr_critic", &C::trainer, &TrainerConfig::lr_critic));
        f.push_back(integer("trainer", "critic_depth", &C::trainer, &TrainerConfig::critic_depth));
        f.push_back(integer("trainer", "critic_width", &C::trainer, &TrainerConfig::critic_width));
        f.push_back(num("trainer", "lr_actor", &C::trainer, &TrainerConfig::lr_actor));
        f.push_back(integer("trainer", "actor_depth", &C::trainer, &TrainerConfig::actor_depth));
        f.push_back(integer("trainer", "actor_width", &C::trainer, &TrainerConfig::actor_width));
        f.push_back(num("trainer", "tau_phi", &C::trainer, &TrainerConfig::tau_critic));
        f.push_back(num("trainer", "tau_theta", &C::trainer, &TrainerConfig::tau_actor));
        f.push_back({"trainer", "polyak_convention",
                     [](const C& c) { return json(std::string(to_string(c.trainer.polyak))); },
                     [](C& c, const json& v) {
                         try {
                             c.trainer.polyak = parse_polyak_convention(as_string(v));
                         } catch (const DomainError& e) {
                             throw ConfigError(e.what());
                         }
                     }});
        f.push_back({"trainer", "q_mode", [](const C& c) { return json(std::string(to_string(c.trainer.q_mode))); },
                     [](C& c, const json& v) {
                         try {
                             c.trainer.q_mode = parse_q_mode(as_string(v));
                         } catch (const DomainError& e) {
                             throw ConfigError(e.what());
                         }
                     }});
        f.push_back(num("trainer", "adam_beta1", &C::trainer, &TrainerConfig::adam_beta1));
        f.push_back(num("trainer", "adam_beta2", &C::trainer, &TrainerConfig::adam_beta2));
        f.push_back(num("trainer", "adam_eps", &C::trainer, &TrainerConfig::adam_epsilon));
        f.push_back(integer("trainer", "eval_every", &C::trainer, &TrainerConfig::eval_every));
        // experiment
        f.push_back({"experiment", "mode",
                     [](const C& c) { return json(std::string(to_string(c.experiment.mode))); },
                     [](C& c, const json& v) { c.experiment.mode = parse_experiment_mode(as_string(v)); }});
        f.push_back({"experiment", "seeds", [](const C& c) { return json(c.experiment.seeds); },
                     [](C& c, const json& v) { c.experiment.seeds = as_seed_list(v); }});
        f.push_back({"experiment", "out", [](const C& c) { return json(c.experiment.out_dir); },
                     [](C& c, const json& v) { c.experiment.out_dir = as_string(v); }});
        f.push_back(integer("experiment", "jobs", &C::experiment, &ExperimentSettings::jobs));
        // online
        f.push_back(num("online", "rho_start", &C::online, &OnlineSettings::rho_start));
        f.push_back(num("online", "rho_end", &C::online, &OnlineSettings::rho_end));
        f.push_back(integer("online", "H", &C::online, &OnlineSettings::episodes));
        f.push_back(num("online", "epsilon", &C::online, &OnlineSettings::epsilon));
        f.push_back(num("online", "sigma_eps", &C::online, &OnlineSettings::sigma_eps));
        f.push_back(integer("online", "eval_every", &C::online, &OnlineSettings::eval_every));
        f.push_back(integer("online", "warmup", &C::online, &OnlineSettings::warmup));
        f.push_back(num("online", "gap_threshold_bps", &C::online, &OnlineSettings::gap_threshold_bps));
        f.push_back({"online", "checkpoint", [](const C& c) { return json(c.online.checkpoint); },
                     [](C& c, const json& v) { c.online.checkpoint = as_string(v); }});
        return f;
    }();
    return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
    for (const auto& f : fields()) {
        if (section == f.section && key == f.key) return &f;
    }
    return nullptr;
}

}  // namespace

json to_json(const ExperimentConfig& config) {
    json j = json::object();
    for (const auto& f : fields()) j[f.section][f.key] = f.get(config);
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c = preset_config("exp");
    for (const auto& [section, body] : j.items()) {
        if (section != "market" && section != "trainer" && section != "experiment" && section != "online")
            throw ConfigError("unknown config section '" + section + "'");
        if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items()) {
            const Field* f = find_field(section, key);
            if (!f) throw ConfigError("unknown config key '" + section + "." + key + "'");
            try {
                f->set(c, value);
            } catch (const ConfigError& e) {
                throw ConfigError(section + "." + key + ": " + e.what());
            }
        }
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file " + path.string());
    out << to_json(config).dump(2) << '\n';
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;  // bare words are strings
    }

    if (key == "tau") {
        find_field("trainer", "tau_phi")->set(config, value);
        find_field("trainer", "tau_theta")->set(config, value);
        return;
    }
    if (key == "seed") {
        config.experiment.seeds = as_seed_list(value);
        return;
    }
    if (key == "scenario" || key == "online.scenario") {
        const std::string s = value.is_string() ? value.get<std::string>() : value.dump();
        if (s == "decrease") {
            config.online.rho_start = 1.0;
            config.online.rho_end = 0.5;
        } else if (s == "increase") {
            config.online.rho_start = 1.0;
            config.online.rho_end = 1.5;
        } else {
            throw ConfigError("scenario must be decrease|increase");
        }
        return;
    }

    const Field* f = nullptr;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
        f = find_field(std::string_view(key).substr(0, dot), std::string_view(key).substr(dot + 1));
    } else {
        for (const char* section : {"market", "trainer", "experiment"}) {
            if ((f = find_field(section, key))) break;
        }
    }
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    f->set(config, value);
}

}  // namespace optexec
