#include "asyncsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace asyncsgd {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::kCompleted: return "completed";
        case RunStatus::kConverged: return "converged";
        case RunStatus::kNotConverged: return "not-converged";
        case RunStatus::kDiverged: return "diverged";
    }
    return "unknown";
}

std::vector<double> RunTrace::grad_norm_series() const {
    std::vector<double> series;
    series.reserve(records.size() + 1);
    for (const auto& r : records) series.push_back(r.grad_norm);
    series.push_back(final_grad_norm);
    return series;
}

double WorkerModel::sample_duration(Rng& stream) const {
    return std::visit(Overloaded{
                          [](const ConstantTime& c) { return c.delta; },
                          [&stream](const LogNormalTime& c) {
                              std::lognormal_distribution<double> dist(c.mu, c.s);
                              return dist(stream.engine());
                          },
                          [&stream](const StragglerTime& c) {
                              return stream.uniform() < c.probability ? c.delta * c.slow_factor : c.delta;
                          },
                      },
                      compute);
}

std::vector<WorkerModel> constant_workers(const std::vector<double>& deltas) {
    std::vector<WorkerModel> out;
    out.reserve(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        out.push_back(WorkerModel{static_cast<WorkerId>(i), ConstantTime{deltas[i]}});
    }
    return out;
}

CustomSchedule table_schedule(std::vector<WorkerId> initial,
                              std::vector<std::pair<Iteration, std::vector<WorkerId>>> table) {
    std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    CustomSchedule s;
    s.initial = std::move(initial);
    s.select = [table = std::move(table)](const ScheduleContext& ctx) {
        auto it = std::lower_bound(table.begin(), table.end(), ctx.t,
                                   [](const auto& entry, Iteration t) { return entry.first < t; });
        if (it != table.end() && it->first == ctx.t) return it->second;
        return std::vector<WorkerId>{};
    };
    return s;
}

// ---------------------------------------------------------------------------------------------

bool Simulator::EventOrder::operator()(const InFlightJob& a, const InFlightJob& b) const {
    // priority_queue keeps the "largest" on top, so return true when `a` should pop after `b`.
    if (a.finish_time != b.finish_time) return a.finish_time > b.finish_time;
    if (a.worker != b.worker) return inverted ? a.worker < b.worker : a.worker > b.worker;
    return a.sequence > b.sequence;
}

Simulator::Simulator(SimulationConfig config)
    : cfg_(std::move(config)),
      events_(EventOrder{cfg_.faults.invert_tie_break}),
      sampling_(derive_seed(cfg_.seed, streams::kClientSampling)) {
    if (!cfg_.objective) throw InvalidConfigError("simulation: objective missing");
    if (cfg_.workers.empty()) throw InvalidConfigError("simulation: empty worker set");
    if (cfg_.x0.size() != cfg_.objective->dim()) throw InvalidConfigError("simulation: x0 dimension mismatch");
    if (!cfg_.x0.allFinite()) throw NumericDomainError("simulation: non-finite x0");
    if (cfg_.noise.sigma < 0.0) throw InvalidConfigError("simulation: sigma must be >= 0");
    for (std::size_t i = 0; i < cfg_.workers.size(); ++i) {
        if (cfg_.workers[i].id != static_cast<WorkerId>(i)) {
            throw InvalidConfigError("simulation: worker ids must be 0..n-1 in order");
        }
        if (const auto* c = std::get_if<ConstantTime>(&cfg_.workers[i].compute); c && !(c->delta > 0.0)) {
            throw InvalidConfigError("simulation: constant compute time must be > 0");
        }
    }
    if (const auto* rule = std::get_if<LastKAverageBelow>(&cfg_.stop)) {
        if (rule->k < 1) throw InvalidConfigError("simulation: last-k window must be >= 1");
        tail_window_ = std::max(tail_window_, rule->k);
    }
    const int n = static_cast<int>(cfg_.workers.size());
    const int clients = cfg_.objective->num_clients();
    if (clients > 1 && clients != n) {
        throw InvalidConfigError("simulation: heterogeneous objective needs one worker per client");
    }

    workers_.reserve(cfg_.workers.size());
    for (int w = 0; w < n; ++w) {
        workers_.push_back(WorkerState{false,
                                       {},
                                       Rng(derive_seed(cfg_.seed, streams::kNoise, static_cast<std::uint64_t>(w))),
                                       Rng(derive_seed(cfg_.seed, streams::kDelayModel, static_cast<std::uint64_t>(w)))});
    }
    ledger_.samples_per_client.assign(static_cast<std::size_t>(n), 0);
    x_ = cfg_.x0;

    // Initial active set C_0.
    std::vector<WorkerId> initial;
    std::visit(Overloaded{
                   [&](const MaxConcurrency& p) { initial = p.initial; },
                   [&](const MiniBatch&) {},
                   [&](const CustomSchedule& p) {
                       if (!p.select) throw InvalidConfigError("custom schedule needs a selection callback");
                       initial = p.initial;
                       if (initial.empty()) throw InvalidConfigError("custom schedule: empty initial worker set");
                   },
                   [&](const UniformClientSampling& p) {
                       if (p.concurrency < 1) throw InvalidConfigError("client sampling: tau_C must be >= 1");
                       if (p.concurrency <= n) {
                           // Partial Fisher-Yates: tau_C distinct clients.
                           std::vector<WorkerId> pool(static_cast<std::size_t>(n));
                           for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
                           for (Iteration k = 0; k < p.concurrency; ++k) {
                               const auto j = k + sampling_.uniform_index(n - k);
                               std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
                               initial.push_back(pool[static_cast<std::size_t>(k)]);
                           }
                       } else {
                           for (Iteration k = 0; k < p.concurrency; ++k) {
                               initial.push_back(static_cast<WorkerId>(sampling_.uniform_index(n)));
                           }
                       }
                   },
                   [&](const SampledMiniBatch& p) {
                       if (p.batch < 1) throw InvalidConfigError("sampled mini-batch: batch must be >= 1");
                       for (Iteration k = 0; k < p.batch; ++k) {
                           initial.push_back(static_cast<WorkerId>(sampling_.uniform_index(n)));
                       }
                   },
               },
               cfg_.scheduler);
    if (initial.empty()) {
        initial.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) initial[static_cast<std::size_t>(i)] = i;
    }
    const bool slots = uses_slots() || std::holds_alternative<UniformClientSampling>(cfg_.scheduler);
    if (!slots) {
        std::vector<WorkerId> sorted = initial;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw InvalidConfigError("initial worker set contains duplicates");
        }
    }
    auto point = std::make_shared<const Vector>(x_);
    for (WorkerId w : initial) {
        if (w < 0 || w >= n) throw InvalidConfigError("initial worker id out of range");
        assign(w, w, 0, point);
    }
    ledger_.concurrency_log.push_back(in_flight_);
    evaluate_current();
    check_stop();
}

bool Simulator::uses_slots() const {
    if (std::holds_alternative<SampledMiniBatch>(cfg_.scheduler)) return true;
    if (const auto* p = std::get_if<UniformClientSampling>(&cfg_.scheduler)) return !p->pile_up;
    return false;
}

void Simulator::assign(WorkerId worker, ClientId client, Iteration start, const std::shared_ptr<const Vector>& point) {
    auto& state = workers_[static_cast<std::size_t>(worker)];
    InFlightJob job{worker, client, start, point, state.noise.next_seed(), 0.0, sequence_++};
    ++in_flight_;
    ++ledger_.samples_per_client[static_cast<std::size_t>(client)];
    if (state.busy && !uses_slots()) {
        state.queue.push_back(std::move(job));
    } else {
        start_job(std::move(job));
    }
}

void Simulator::start_job(InFlightJob job) {
    auto& state = workers_[static_cast<std::size_t>(job.worker)];
    job.finish_time = now_ + cfg_.workers[static_cast<std::size_t>(job.worker)].sample_duration(state.timing);
    state.busy = true;
    events_.push(std::move(job));
}

void Simulator::evaluate_current() {
    const Vector g = cfg_.objective->gradient(x_);
    current_grad_norm_ = g.norm();
    if (cfg_.keep_records) current_value_ = cfg_.objective->value(x_);
    recent_norms_.push_back(current_grad_norm_);
    if (static_cast<int>(recent_norms_.size()) > tail_window_) recent_norms_.pop_front();
}

void Simulator::check_stop() {
    if (!x_.allFinite() || !std::isfinite(current_grad_norm_) || current_grad_norm_ > cfg_.divergence_threshold) {
        status_ = RunStatus::kDiverged;
        done_ = true;
        return;
    }
    std::visit(Overloaded{
                   [&](const FixedIterations& r) {
                       if (t_ >= r.iterations) {
                           status_ = RunStatus::kCompleted;
                           done_ = true;
                       }
                   },
                   [&](const GradNormBelow& r) {
                       if (t_ >= 1 && current_grad_norm_ <= r.eps) {
                           status_ = RunStatus::kConverged;
                           done_ = true;
                       } else if (t_ >= r.max_iterations) {
                           status_ = RunStatus::kNotConverged;
                           done_ = true;
                       }
                   },
                   [&](const LastKAverageBelow& r) {
                       if (t_ >= 1 && static_cast<int>(recent_norms_.size()) >= r.k) {
                           double sum = 0.0;
                           for (auto it = recent_norms_.end() - r.k; it != recent_norms_.end(); ++it) sum += *it;
                           if (sum / r.k <= r.eps) {
                               status_ = RunStatus::kConverged;
                               done_ = true;
                               return;
                           }
                       }
                       if (t_ >= r.max_iterations) {
                           status_ = RunStatus::kNotConverged;
                           done_ = true;
                       }
                   },
               },
               cfg_.stop);
}

std::vector<WorkerId> Simulator::select_assignments(const InFlightJob& finished) {
    const int n = static_cast<int>(cfg_.workers.size());
    return std::visit(
        Overloaded{
            [&](const MaxConcurrency&) { return std::vector<WorkerId>{finished.worker}; },
            [&](const MiniBatch&) {
                std::vector<WorkerId> all;
                if ((t_ + 1) % n == 0) {
                    for (int i = 0; i < n; ++i) all.push_back(i);
                }
                return all;
            },
            [&](const CustomSchedule& p) {
                ScheduleContext ctx{t_, finished.worker, {}, in_flight_};
                for (int i = 0; i < n; ++i) {
                    if (!workers_[static_cast<std::size_t>(i)].busy) ctx.idle.push_back(i);
                }
                auto chosen = p.select(ctx);
                std::sort(chosen.begin(), chosen.end());
                if (std::adjacent_find(chosen.begin(), chosen.end()) != chosen.end()) {
                    throw InvalidConfigError("custom schedule selected a worker twice");
                }
                for (WorkerId w : chosen) {
                    if (!std::binary_search(ctx.idle.begin(), ctx.idle.end(), w)) {
                        throw InvalidConfigError("custom schedule selected busy or unknown worker " +
                                                 std::to_string(w));
                    }
                }
                return chosen;
            },
            [&](const UniformClientSampling&) {
                return std::vector<WorkerId>{static_cast<WorkerId>(sampling_.uniform_index(n))};
            },
            [&](const SampledMiniBatch& p) {
                std::vector<WorkerId> draws;
                if ((t_ + 1) % p.batch == 0) {
                    for (Iteration k = 0; k < p.batch; ++k) {
                        draws.push_back(static_cast<WorkerId>(sampling_.uniform_index(n)));
                    }
                }
                return draws;
            },
        },
        cfg_.scheduler);
}

void Simulator::advance() {
    if (events_.empty()) {
        throw SimulationDeadlock("no job in flight at iteration " + std::to_string(t_) +
                                 "; the scheduling policy starved every worker");
    }
    InFlightJob job = events_.top();
    events_.pop();
    now_ = job.finish_time;

    const Iteration active = in_flight_;
    Iteration delay = t_ - job.start_iteration;
    if (cfg_.faults.delay_off_by_one) delay += 1;
    const double eta = stepsize_at(cfg_.stepsize, t_, delay);

    if (eta != 0.0) {
        Rng data(job.data_seed);
        const ClientId grad_client = cfg_.objective->num_clients() == 1 ? 0 : job.client;
        x_ -= eta * stochastic_gradient(*cfg_.objective, grad_client, *job.assignment_point, cfg_.noise, data);
    }
    ledger_.applied.push_back(AppliedDelay{job.start_iteration, delay, job.worker, job.client});
    --in_flight_;

    auto& state = workers_[static_cast<std::size_t>(job.worker)];
    state.busy = false;
    if (!uses_slots() && !state.queue.empty()) {
        InFlightJob next = std::move(state.queue.front());
        state.queue.pop_front();
        start_job(std::move(next));
    }

    const auto chosen = select_assignments(job);
    if (!chosen.empty()) {
        auto point = std::make_shared<const Vector>(x_);
        for (WorkerId w : chosen) assign(w, w, t_ + 1, point);
    }

    if (cfg_.keep_records) {
        records_.push_back(IterationRecord{t_, job.worker, job.client, delay, eta, current_grad_norm_, current_value_,
                                           now_, static_cast<Iteration>(chosen.size()), active});
    }

    ++t_;
    ledger_.concurrency_log.push_back(in_flight_);
    evaluate_current();
    check_stop();
}

RunTrace Simulator::trace() const {
    RunTrace out;
    out.records = records_;
    out.final_point = x_;
    out.final_grad_norm = current_grad_norm_;
    out.final_value = cfg_.keep_records ? current_value_ : cfg_.objective->value(x_);
    out.wall_time = now_;
    out.status = status_;
    out.tail_grad_norms.assign(recent_norms_.begin(), recent_norms_.end());
    out.ledger = ledger_;
    out.ledger.iterations = t_;

    // Snapshot C_T: the running jobs in event order (the first is j_T), then queued ones.
    auto events = events_;
    bool first = true;
    while (!events.empty()) {
        const auto& job = events.top();
        out.ledger.in_flight.push_back(PendingJob{job.start_iteration, job.worker, job.client, first});
        first = false;
        events.pop();
    }
    for (const auto& state : workers_) {
        for (const auto& job : state.queue) {
            out.ledger.in_flight.push_back(PendingJob{job.start_iteration, job.worker, job.client, false});
        }
    }
    return out;
}

RunTrace Simulator::run() {
    while (!done_) advance();
    RunTrace out = trace();
    records_.clear();
    return out;
}

RunTrace simulate(SimulationConfig config) {
    Simulator sim(std::move(config));
    return sim.run();
}

RunTrace run_homogeneous(SimulationConfig config) {
    if (std::holds_alternative<UniformClientSampling>(config.scheduler)) {
        throw InvalidConfigError("run_homogeneous: client sampling belongs to run_heterogeneous");
    }
    return simulate(std::move(config));
}

RunTrace run_heterogeneous(std::shared_ptr<const HeterogeneousFamily> family, const NoiseModel& noise,
                           std::vector<WorkerModel> workers, Iteration concurrency, const StepsizePolicy& stepsize,
                           const Vector& x0, const StopRule& stop, std::uint64_t seed, bool pile_up) {
    if (!family) throw InvalidConfigError("run_heterogeneous: family missing");
    if (static_cast<int>(workers.size()) != family->num_clients()) {
        throw InvalidConfigError("run_heterogeneous: need one worker model per client");
    }
    SimulationConfig cfg;
    cfg.objective = family;
    cfg.noise = noise;
    cfg.workers = std::move(workers);
    cfg.scheduler = UniformClientSampling{concurrency, pile_up};
    cfg.stepsize = stepsize;
    cfg.x0 = x0;
    cfg.stop = stop;
    cfg.seed = seed;
    return simulate(std::move(cfg));
}

}  // namespace asyncsgd
