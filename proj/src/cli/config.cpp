#include "asyncsgd/cli/config.hpp"

#include <algorithm>
#include <set>

#include "asyncsgd/trace_io.hpp"

namespace asyncsgd::cli {
namespace {

using nlohmann::json;

// Field access with the JSON-pointer path of the offending field in every error.
class Reader {
public:
    Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw InvalidConfigError((path_.empty() ? std::string("/") : path_) + ": " + what);
    }
    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw InvalidConfigError(path_ + "/" + key + ": " + what);
    }

    bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

    Reader child(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        return Reader(doc_.at(key), path_ + "/" + key);
    }
    const json& raw(const std::string& key) const { return doc_.at(key); }
    std::string path(const std::string& key) const { return path_ + "/" + key; }

    template <class T>
    T get(const std::string& key, T fallback) const {
        return has(key) ? get<T>(key) : fallback;
    }

    template <class T>
    T get(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        const json& v = doc_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(key, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(key, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) return v.get<T>();
                if (v.get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(key, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(key, "expected a string");
        }
        try {
            return v.get<T>();
        } catch (const json::exception& e) {
            fail(key, e.what());
        }
    }

    void reject_unknown(std::initializer_list<const char*> known) const {
        const std::set<std::string> allowed(known.begin(), known.end());
        for (const auto& [key, _] : doc_.items()) {
            if (!allowed.count(key)) fail(key, "unknown field");
        }
    }

private:
    const json& doc_;
    std::string path_;
};

void require(bool ok, const Reader& r, const std::string& key, const std::string& what) {
    if (!ok) r.fail(key, what);
}

ObjectiveSpec read_objective(const Reader& r) {
    r.reject_unknown({"family", "dim", "lambda_min", "lambda_max", "samples", "clients", "zeta", "path"});
    ObjectiveSpec o;
    o.family = r.get<std::string>("family");
    if (o.family == "file") {
        o.path = r.get<std::string>("path");
        return o;
    }
    if (o.family != "quadratic" && o.family != "logistic" && o.family != "heterogeneous") {
        r.fail("family", "must be quadratic, logistic, heterogeneous or file");
    }
    o.dim = r.get<std::int64_t>("dim", o.dim);
    require(o.dim >= 1, r, "dim", "must be >= 1");
    if (o.family != "logistic") require(o.dim >= 2, r, "dim", "must be >= 2 for quadratic objectives");
    if (o.family == "logistic") {
        o.samples = r.get<std::int64_t>("samples", o.samples);
        require(o.samples >= 1, r, "samples", "must be >= 1");
        return o;
    }
    o.lambda_min = r.get<double>("lambda_min", o.lambda_min);
    o.lambda_max = r.get<double>("lambda_max", o.lambda_max);
    require(o.lambda_min > 0.0, r, "lambda_min", "must be positive");
    require(o.lambda_max >= o.lambda_min, r, "lambda_max", "must be >= lambda_min");
    if (o.family == "heterogeneous") {
        o.clients = r.get<int>("clients", o.clients);
        o.zeta = r.get<double>("zeta", o.zeta);
        require(o.clients >= 1, r, "clients", "must be >= 1");
        require(o.zeta >= 0.0, r, "zeta", "must be non-negative");
    }
    return o;
}

WorkerSpec read_worker(const Reader& r) {
    r.reject_unknown({"compute", "delta", "mu", "s", "slow_factor", "probability", "count"});
    WorkerSpec w;
    w.compute = r.get<std::string>("compute", w.compute);
    if (w.compute == "constant" || w.compute == "straggler") {
        w.delta = r.get<double>("delta", w.delta);
        require(w.delta > 0.0, r, "delta", "must be positive");
    }
    if (w.compute == "lognormal") {
        w.mu = r.get<double>("mu", w.mu);
        w.s = r.get<double>("s", w.s);
        require(w.s >= 0.0, r, "s", "must be non-negative");
    } else if (w.compute == "straggler") {
        w.slow_factor = r.get<double>("slow_factor", w.slow_factor);
        w.probability = r.get<double>("probability", w.probability);
        require(w.slow_factor >= 1.0, r, "slow_factor", "must be >= 1");
        require(w.probability >= 0.0 && w.probability <= 1.0, r, "probability", "must lie in [0, 1]");
    } else if (w.compute != "constant") {
        r.fail("compute", "must be constant, lognormal or straggler");
    }
    return w;
}

std::vector<WorkerSpec> read_workers(const Reader& parent) {
    const json& doc = parent.raw("workers");
    std::vector<WorkerSpec> out;
    if (doc.is_array()) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            out.push_back(read_worker(Reader(doc[i], parent.path("workers") + "/" + std::to_string(i))));
        }
    } else {
        // {"count": n, ...}: n identical workers.
        const Reader r(doc, parent.path("workers"));
        const int count = r.get<int>("count");
        require(count >= 1, r, "count", "must be >= 1");
        out.assign(static_cast<std::size_t>(count), read_worker(r));
    }
    if (out.empty()) parent.fail("workers", "at least one worker is required");
    return out;
}

std::vector<WorkerId> read_ids(const Reader& r, const std::string& key, std::size_t workers) {
    if (!r.has(key)) return {};
    const json& v = r.raw(key);
    if (!v.is_array()) r.fail(key, "expected an array of worker ids");
    std::vector<WorkerId> ids;
    for (const auto& e : v) {
        if (!e.is_number_integer()) r.fail(key, "expected integer worker ids");
        const auto id = e.get<std::int64_t>();
        if (id < 0 || static_cast<std::size_t>(id) >= workers) r.fail(key, "worker id out of range");
        ids.push_back(static_cast<WorkerId>(id));
    }
    return ids;
}

SchedulerSpec read_scheduler(const Reader& r, std::size_t workers) {
    r.reject_unknown({"policy", "initial", "table", "tau_c", "pile_up", "batch"});
    SchedulerSpec s;
    s.policy = r.get<std::string>("policy");
    if (s.policy == "max_concurrency" || s.policy == "custom") {
        s.initial = read_ids(r, "initial", workers);
    }
    if (s.policy == "custom") {
        if (!r.has("table") || !r.raw("table").is_array()) r.fail("table", "expected an array of {t, assign}");
        const json& table = r.raw("table");
        for (std::size_t i = 0; i < table.size(); ++i) {
            const Reader e(table[i], r.path("table") + "/" + std::to_string(i));
            e.reject_unknown({"t", "assign"});
            ScheduleEntry entry{e.get<Iteration>("t"), read_ids(e, "assign", workers)};
            if (entry.t < 0) e.fail("t", "must be non-negative");
            s.table.push_back(std::move(entry));
        }
    } else if (s.policy == "uniform_client_sampling") {
        s.tau_c = r.get<Iteration>("tau_c");
        s.pile_up = r.get<bool>("pile_up", s.pile_up);
        require(s.tau_c >= 1, r, "tau_c", "must be >= 1");
    } else if (s.policy == "sampled_minibatch") {
        s.batch = r.get<Iteration>("batch");
        require(s.batch >= 1, r, "batch", "must be >= 1");
    } else if (s.policy != "max_concurrency" && s.policy != "minibatch") {
        r.fail("policy", "must be max_concurrency, minibatch, custom, uniform_client_sampling or sampled_minibatch");
    }
    return s;
}

TuneSpec read_tune(const Reader& r) {
    r.reject_unknown({"points_per_decade", "lo", "hi", "criterion"});
    TuneSpec t;
    t.points_per_decade = r.get<int>("points_per_decade", t.points_per_decade);
    t.lo = r.get<double>("lo", t.lo);
    t.hi = r.get<double>("hi", t.hi);
    t.criterion = r.get<std::string>("criterion", t.criterion);
    require(t.points_per_decade >= 1, r, "points_per_decade", "must be >= 1");
    require(t.lo > 0.0, r, "lo", "must be positive");
    require(t.hi >= t.lo, r, "hi", "must be >= lo");
    require(t.criterion == "min_final_error" || t.criterion == "min_T_to_eps", r, "criterion",
            "must be min_final_error or min_T_to_eps");
    return t;
}

StepsizeSpec read_stepsize(const Reader& r) {
    r.reject_unknown({"rule", "eta", "mode", "L", "tau_c", "tau_max", "r0", "T", "tune"});
    StepsizeSpec s;
    s.rule = r.get<std::string>("rule");
    if (s.rule == "constant" || s.rule == "delay_adaptive") {
        s.eta = r.get<double>("eta", s.eta);
        require(s.eta > 0.0, r, "eta", "must be positive");
    }
    if (s.rule == "delay_adaptive" || s.rule == "theoretical") {
        if (r.has("L")) {
            s.smoothness = r.get<double>("L");
            require(*s.smoothness > 0.0, r, "L", "must be positive");
        }
        if (r.has("tau_c")) {
            s.tau_c = r.get<Iteration>("tau_c");
            require(*s.tau_c >= 1, r, "tau_c", "must be >= 1");
        }
    }
    if (s.rule == "delay_adaptive") {
        s.mode = r.get<std::string>("mode", s.mode);
        require(s.mode == "scale" || s.mode == "drop", r, "mode", "must be scale or drop");
    } else if (s.rule == "theoretical") {
        s.tau_max = r.get<Iteration>("tau_max", s.tau_max);
        s.r0 = r.get<double>("r0", s.r0);
        s.horizon = r.get<Iteration>("T", s.horizon);
        require(s.tau_max >= 1, r, "tau_max", "must be >= 1");
        require(s.r0 >= 0.0, r, "r0", "must be non-negative");
        require(s.horizon >= 0, r, "T", "must be non-negative");
    } else if (s.rule != "constant") {
        r.fail("rule", "must be constant, delay_adaptive or theoretical");
    }
    if (r.has("tune")) {
        if (s.rule == "theoretical") r.fail("tune", "the theoretical rule has no stepsize to tune");
        s.tune = read_tune(r.child("tune"));
    }
    return s;
}

StopSpec read_stop(const Reader& r) {
    r.reject_unknown({"rule", "iterations", "eps", "k", "max_iterations"});
    StopSpec s;
    s.rule = r.get<std::string>("rule");
    if (s.rule == "fixed") {
        s.iterations = r.get<Iteration>("iterations");
        require(s.iterations >= 0, r, "iterations", "must be non-negative");
        return s;
    }
    if (s.rule != "grad_norm" && s.rule != "last_k") r.fail("rule", "must be fixed, grad_norm or last_k");
    s.eps = r.get<double>("eps");
    s.max_iterations = r.get<Iteration>("max_iterations", s.max_iterations);
    require(s.eps > 0.0, r, "eps", "must be positive");
    require(s.max_iterations >= 1, r, "max_iterations", "must be >= 1");
    if (s.rule == "last_k") {
        s.k = r.get<int>("k", s.k);
        require(s.k >= 1, r, "k", "must be >= 1");
    }
    return s;
}

InitialPointSpec read_x0(const Reader& r) {
    r.reject_unknown({"kind", "scale", "values"});
    InitialPointSpec p;
    p.kind = r.get<std::string>("kind");
    if (p.kind == "gaussian") {
        p.scale = r.get<double>("scale", p.scale);
        require(p.scale >= 0.0, r, "scale", "must be non-negative");
    } else if (p.kind == "explicit") {
        p.values = r.get<std::vector<double>>("values");
    } else if (p.kind != "zeros") {
        r.fail("kind", "must be zeros, gaussian or explicit");
    }
    return p;
}

json objective_json(const ObjectiveSpec& o) {
    if (o.family == "file") return {{"family", o.family}, {"path", o.path}};
    if (o.family == "logistic") return {{"family", o.family}, {"dim", o.dim}, {"samples", o.samples}};
    json j = {{"family", o.family}, {"dim", o.dim}, {"lambda_min", o.lambda_min}, {"lambda_max", o.lambda_max}};
    if (o.family == "heterogeneous") {
        j["clients"] = o.clients;
        j["zeta"] = o.zeta;
    }
    return j;
}

json worker_json(const WorkerSpec& w) {
    if (w.compute == "lognormal") return {{"compute", w.compute}, {"mu", w.mu}, {"s", w.s}};
    if (w.compute == "straggler") {
        return {{"compute", w.compute},
                {"delta", w.delta},
                {"slow_factor", w.slow_factor},
                {"probability", w.probability}};
    }
    return {{"compute", w.compute}, {"delta", w.delta}};
}

json scheduler_json(const SchedulerSpec& s) {
    json j = {{"policy", s.policy}};
    if (s.policy == "max_concurrency" || s.policy == "custom") j["initial"] = s.initial;
    if (s.policy == "custom") {
        json table = json::array();
        for (const auto& e : s.table) table.push_back({{"t", e.t}, {"assign", e.assign}});
        j["table"] = std::move(table);
    } else if (s.policy == "uniform_client_sampling") {
        j["tau_c"] = s.tau_c;
        j["pile_up"] = s.pile_up;
    } else if (s.policy == "sampled_minibatch") {
        j["batch"] = s.batch;
    }
    return j;
}

json stepsize_json(const StepsizeSpec& s) {
    json j = {{"rule", s.rule}};
    if (s.rule != "theoretical") j["eta"] = s.eta;
    if (s.rule != "constant") {
        if (s.smoothness) j["L"] = *s.smoothness;
        if (s.tau_c) j["tau_c"] = *s.tau_c;
    }
    if (s.rule == "delay_adaptive") j["mode"] = s.mode;
    if (s.rule == "theoretical") {
        j["tau_max"] = s.tau_max;
        j["r0"] = s.r0;
        j["T"] = s.horizon;
    }
    if (s.tune) {
        j["tune"] = {{"points_per_decade", s.tune->points_per_decade},
                     {"lo", s.tune->lo},
                     {"hi", s.tune->hi},
                     {"criterion", s.tune->criterion}};
    }
    return j;
}

json stop_json(const StopSpec& s) {
    if (s.rule == "fixed") return {{"rule", s.rule}, {"iterations", s.iterations}};
    json j = {{"rule", s.rule}, {"eps", s.eps}, {"max_iterations", s.max_iterations}};
    if (s.rule == "last_k") j["k"] = s.k;
    return j;
}

json x0_json(const InitialPointSpec& p) {
    if (p.kind == "gaussian") return {{"kind", p.kind}, {"scale", p.scale}};
    if (p.kind == "explicit") return {{"kind", p.kind}, {"values", p.values}};
    return {{"kind", p.kind}};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    const Reader r(doc, "");
    r.reject_unknown({"seed", "objective", "sigma", "workers", "scheduler", "stepsize", "stop", "x0", "replicas",
                      "slow_factors"});
    ExperimentConfig cfg;
    cfg.seed = r.get<std::uint64_t>("seed", cfg.seed);
    cfg.objective = read_objective(r.child("objective"));
    cfg.sigma = r.get<double>("sigma", cfg.sigma);
    require(cfg.sigma >= 0.0, r, "sigma", "must be non-negative");
    if (!r.has("workers")) r.fail("workers", "missing");
    cfg.workers = read_workers(r);
    cfg.scheduler = r.has("scheduler") ? read_scheduler(r.child("scheduler"), cfg.workers.size()) : SchedulerSpec{};
    cfg.stepsize = read_stepsize(r.child("stepsize"));
    cfg.stop = read_stop(r.child("stop"));
    cfg.x0 = r.has("x0") ? read_x0(r.child("x0")) : InitialPointSpec{};
    cfg.replicas = r.get<int>("replicas", cfg.replicas);
    require(cfg.replicas >= 1, r, "replicas", "must be >= 1");
    cfg.slow_factors = r.get<std::vector<double>>("slow_factors", {});
    for (double x : cfg.slow_factors) require(x >= 1.0, r, "slow_factors", "every slow factor must be >= 1");

    if (cfg.objective.family == "heterogeneous" && cfg.scheduler.policy == "uniform_client_sampling" &&
        cfg.workers.size() != static_cast<std::size_t>(cfg.objective.clients)) {
        r.fail("workers", "uniform client sampling needs one worker model per client");
    }
    if (cfg.x0.kind == "explicit" && cfg.objective.family != "file" &&
        static_cast<std::int64_t>(cfg.x0.values.size()) != cfg.objective.dim) {
        r.fail("x0", "values must have the objective's dimension");
    }
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json workers = json::array();
    for (const auto& w : cfg.workers) workers.push_back(worker_json(w));
    json j = {{"seed", cfg.seed},
              {"objective", objective_json(cfg.objective)},
              {"sigma", cfg.sigma},
              {"workers", std::move(workers)},
              {"scheduler", scheduler_json(cfg.scheduler)},
              {"stepsize", stepsize_json(cfg.stepsize)},
              {"stop", stop_json(cfg.stop)},
              {"x0", x0_json(cfg.x0)},
              {"replicas", cfg.replicas}};
    if (!cfg.slow_factors.empty()) j["slow_factors"] = cfg.slow_factors;
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    return config_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------------------------

ObjectivePtr build_objective(const ExperimentConfig& cfg) {
    const auto& o = cfg.objective;
    const auto seed = derive_seed(cfg.seed, streams::kObjective);
    if (o.family == "file") return objective_from_json(read_json_file(o.path));
    if (o.family == "logistic") return make_logistic(o.samples, o.dim, seed);
    auto base = make_quadratic(o.dim, o.lambda_min, o.lambda_max, seed);
    if (o.family == "heterogeneous") return make_heterogeneous(base, o.clients, o.zeta, derive_seed(seed, "shifts"));
    return base;
}

std::vector<WorkerModel> build_workers(const ExperimentConfig& cfg) {
    std::vector<WorkerModel> out;
    for (std::size_t i = 0; i < cfg.workers.size(); ++i) {
        const auto& w = cfg.workers[i];
        WorkerModel m;
        m.id = static_cast<WorkerId>(i);
        if (w.compute == "lognormal") {
            m.compute = LogNormalTime{w.mu, w.s};
        } else if (w.compute == "straggler") {
            m.compute = StragglerTime{w.delta, w.slow_factor, w.probability};
        } else {
            m.compute = ConstantTime{w.delta};
        }
        out.push_back(m);
    }
    return out;
}

SchedulerPolicy build_scheduler(const ExperimentConfig& cfg) {
    const auto& s = cfg.scheduler;
    if (s.policy == "minibatch") return MiniBatch{};
    if (s.policy == "uniform_client_sampling") return UniformClientSampling{s.tau_c, s.pile_up};
    if (s.policy == "sampled_minibatch") return SampledMiniBatch{s.batch};
    if (s.policy == "custom") {
        std::vector<std::pair<Iteration, std::vector<WorkerId>>> table;
        for (const auto& e : s.table) table.emplace_back(e.t, e.assign);
        return table_schedule(s.initial, std::move(table));
    }
    return MaxConcurrency{s.initial};
}

StopRule build_stop(const ExperimentConfig& cfg) {
    const auto& s = cfg.stop;
    if (s.rule == "grad_norm") return GradNormBelow{s.eps, s.max_iterations};
    if (s.rule == "last_k") return LastKAverageBelow{s.eps, s.k, s.max_iterations};
    return FixedIterations{s.iterations};
}

Vector build_initial_point(const ExperimentConfig& cfg, const Objective& obj) {
    const auto& p = cfg.x0;
    if (p.kind == "explicit") {
        if (static_cast<Eigen::Index>(p.values.size()) != obj.dim()) {
            throw InvalidConfigError("/x0/values: must have the objective's dimension");
        }
        return Eigen::Map<const Vector>(p.values.data(), static_cast<Eigen::Index>(p.values.size()));
    }
    if (p.kind == "gaussian") {
        Rng rng(derive_seed(cfg.seed, streams::kInitialPoint));
        return p.scale * rng.normal_vector(obj.dim());
    }
    return Vector::Zero(obj.dim());
}

namespace {

Iteration default_concurrency(const ExperimentConfig& cfg) {
    const auto& s = cfg.scheduler;
    if (s.policy == "uniform_client_sampling") return s.tau_c;
    if (s.policy == "sampled_minibatch") return s.batch;
    if ((s.policy == "max_concurrency" || s.policy == "custom") && !s.initial.empty()) {
        return static_cast<Iteration>(s.initial.size());
    }
    return static_cast<Iteration>(cfg.workers.size());
}

}  // namespace

StepsizePolicy build_stepsize(const ExperimentConfig& cfg, const Objective& obj, std::optional<double> eta_override) {
    const auto& s = cfg.stepsize;
    const double eta = eta_override.value_or(s.eta);
    const double smoothness = s.smoothness.value_or(obj.smoothness());
    const Iteration concurrency = s.tau_c.value_or(default_concurrency(cfg));
    if (s.rule == "delay_adaptive") {
        return DelayAdaptiveStepsize{eta, smoothness, concurrency,
                                     s.mode == "drop" ? AdaptiveMode::kDrop : AdaptiveMode::kScale};
    }
    if (s.rule == "theoretical") {
        return TheoreticalStepsize{smoothness, s.tau_max, concurrency, cfg.sigma, s.r0, s.horizon};
    }
    return ConstantStepsize{eta};
}

std::uint64_t replica_seed(std::uint64_t master, int replica) {
    return replica == 0 ? master : derive_seed(master, "replica", static_cast<std::uint64_t>(replica));
}

SimulationConfig build_simulation(const ExperimentConfig& cfg, ObjectivePtr obj, int replica) {
    SimulationConfig sim;
    sim.x0 = build_initial_point(cfg, *obj);
    sim.stepsize = build_stepsize(cfg, *obj);
    sim.objective = std::move(obj);
    sim.noise = NoiseModel{cfg.sigma};
    sim.workers = build_workers(cfg);
    sim.scheduler = build_scheduler(cfg);
    sim.stop = build_stop(cfg);
    sim.seed = replica_seed(cfg.seed, replica);
    return sim;
}

}  // namespace asyncsgd::cli
