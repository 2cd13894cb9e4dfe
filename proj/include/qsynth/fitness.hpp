#pragma once

// Scores a motif program against a task's training pairs: per-pair overlap
// scores, gradient training of CP angles, per-size repetition search, and
// the penalized scalar fitness used by the evolutionary search.

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <variant>
#include <vector>

#include "qsynth/compiler.hpp"
#include "qsynth/dsl.hpp"
#include "qsynth/sim.hpp"

namespace qsynth {

/// One supervised example: run the circuit on `input`, compare against the
/// target. A statevector target scores by fidelity; a scalar target t in
/// [0, 1] scores by 1 - |t - m| where m is the measured overlap with the
/// all-zeros reference state.
struct TrainingPair {
    Statevector input;
    std::variant<Statevector, double> target;
    std::shared_ptr<const OracleImpl> oracle;  // null when the task has none

    TrainingPair(Statevector in, Statevector tgt,
                 std::shared_ptr<const OracleImpl> orc = nullptr)
        : input(std::move(in)), target(std::move(tgt)), oracle(std::move(orc)) {}
    TrainingPair(Statevector in, double tgt,
                 std::shared_ptr<const OracleImpl> orc = nullptr)
        : input(std::move(in)), target(tgt), oracle(std::move(orc)) {}
};

/// Pairs grouped by circuit size, plus the task-level repetition cap.
struct TrainingSet {
    std::map<int, std::vector<TrainingPair>> by_q;
    bool single_repetition = false;  // cap learned repetitions at 1
};

struct PenaltyWeights {
    double gate = 1e-3;    // per gate, summed over sizes
    double oracle = 0.5;   // per oracle call beyond the first, per size
    double param = 1e-3;   // per parameter slot, summed over sizes
    double jsd = 0.1;      // on the pooled per-pair score divergence
};

struct TrainOptions {
    int max_steps = 2000;
    double learning_rate = 0.1;
    double convergence_tol = 1e-9;
    double budget_seconds = 2.0;
    bool step_capped = false;  // ignore the wall-clock budget entirely
};

// ---------------------------------------------------------------------------
// Per-pair scoring

inline double pair_score(const CircuitIR& circuit, const std::vector<double>& params,
                         const TrainingPair& pair) {
    Statevector out = run_circuit(circuit, params, pair.input, pair.oracle.get());
    if (const auto* target = std::get_if<Statevector>(&pair.target))
        return fidelity(*target, out);
    double t = std::get<double>(pair.target);
    double measured = std::norm(out[0]);
    return 1.0 - std::abs(t - measured);
}

/// Gradient of the pair score with respect to the parameter slots.
inline std::vector<double> grad_params(const CircuitIR& circuit, const std::vector<double>& params,
                                       const TrainingPair& pair) {
    if (const auto* target = std::get_if<Statevector>(&pair.target))
        return grad_overlap(circuit, params, pair.input, *target, pair.oracle.get());
    double t = std::get<double>(pair.target);
    Statevector out = run_circuit(circuit, params, pair.input, pair.oracle.get());
    double measured = std::norm(out[0]);
    double sign = t > measured ? 1.0 : (t < measured ? -1.0 : 0.0);
    Statevector reference(circuit.n_qubits);
    auto grad = grad_overlap(circuit, params, pair.input, reference, pair.oracle.get());
    for (auto& g : grad) g *= sign;
    return grad;
}

inline std::vector<double> pair_scores(const CircuitIR& circuit, const std::vector<double>& params,
                                       const std::vector<TrainingPair>& pairs) {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& p : pairs) scores.push_back(pair_score(circuit, params, p));
    return scores;
}

inline double mean_score(const CircuitIR& circuit, const std::vector<double>& params,
                         const std::vector<TrainingPair>& pairs) {
    if (pairs.empty()) throw ValidationError("no training pairs");
    double s = 0.0;
    for (const auto& p : pairs) s += pair_score(circuit, params, p);
    return s / static_cast<double>(pairs.size());
}

/// Mean per-pair score of `program` instantiated at size q with r
/// repetitions.
inline double raw_fitness_q(const MotifProgram& program, int q, int r,
                            const std::vector<double>& params,
                            const std::vector<TrainingPair>& pairs) {
    return mean_score(instantiate(program, q, r), params, pairs);
}

// ---------------------------------------------------------------------------
// Score-distribution penalty

/// Jensen-Shannon divergence (natural log) between the normalized score
/// vector and the uniform distribution. All-zero scores count as maximally
/// uneven and return ln 2.
inline double jsd_penalty(const std::vector<double>& scores) {
    if (scores.empty()) throw ValidationError("jsd_penalty needs at least one score");
    double total = 0.0;
    for (double s : scores) {
        if (s < 0.0) throw ValidationError("scores must be non-negative");
        total += s;
    }
    if (total == 0.0) return std::numbers::ln2;
    const double u = 1.0 / static_cast<double>(scores.size());
    double div = 0.0;
    for (double s : scores) {
        double p = s / total;
        double m = 0.5 * (p + u);
        if (p > 0.0) div += 0.5 * p * std::log(p / m);
        div += 0.5 * u * std::log(u / m);
    }
    return div < 0.0 ? 0.0 : div;  // clamp tiny negative rounding
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
    std::vector<double> params;
    double score = 0.0;
    int steps = 0;
};

/// Gradient-ascent training of the circuit's CP angles on the mean pair
/// score. Angles start at pi/2; returns the best parameters seen. Stops on
/// score convergence, the step cap, or (unless step-capped) the wall-clock
/// budget.
inline TrainResult train_circuit(const CircuitIR& circuit, const std::vector<TrainingPair>& pairs,
                                 const TrainOptions& opts = {}) {
    TrainResult result;
    result.params.assign(static_cast<std::size_t>(circuit.param_slots), std::numbers::pi / 2.0);
    result.score = mean_score(circuit, result.params, pairs);
    if (circuit.param_slots == 0) return result;

    auto started = std::chrono::steady_clock::now();
    std::vector<double> params = result.params;
    double prev = result.score;
    for (int step = 1; step <= opts.max_steps; ++step) {
        std::vector<double> grad(params.size(), 0.0);
        for (const auto& pair : pairs) {
            auto g = grad_params(circuit, params, pair);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
        const double scale = opts.learning_rate / static_cast<double>(pairs.size());
        for (std::size_t i = 0; i < params.size(); ++i) params[i] += scale * grad[i];

        double score = mean_score(circuit, params, pairs);
        result.steps = step;
        if (score > result.score) {
            result.score = score;
            result.params = params;
        }
        if (std::abs(score - prev) < opts.convergence_tol) break;
        prev = score;
        if (!opts.step_capped) {
            std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
            if (elapsed.count() > opts.budget_seconds) break;
        }
    }
    return result;
}

inline TrainResult train_parameters(const MotifProgram& program, int q, int r,
                                    const std::vector<TrainingPair>& pairs,
                                    const TrainOptions& opts = {}) {
    return train_circuit(instantiate(program, q, r), pairs, opts);
}

// ---------------------------------------------------------------------------
// Repetition search

struct RepetitionResult {
    int r = 1;
    std::vector<double> params;
    double score = 0.0;
};

/// Trains at r = 1, 2, ... and keeps the best mean score, stopping as soon
/// as one more repetition fails to improve by more than 1e-9. Programs with
/// a fixed repetition count are evaluated at that count only.
inline RepetitionResult repetition_search(const MotifProgram& program, int q,
                                          const std::vector<TrainingPair>& pairs, int max_r,
                                          const TrainOptions& opts = {}) {
    if (max_r < 1) throw ValidationError("repetition cap must be positive");
    RepetitionResult best;
    if (!program.repetitions.is_learned()) {
        int r = program.repetitions.count();
        auto t = train_parameters(program, q, r, pairs, opts);
        return {r, std::move(t.params), t.score};
    }
    double prev = -std::numeric_limits<double>::infinity();
    for (int r = 1; r <= max_r; ++r) {
        auto t = train_parameters(program, q, r, pairs, opts);
        if (r == 1 || t.score > best.score)
            best = {r, std::move(t.params), t.score};
        if (r > 1 && t.score <= prev + 1e-9) break;
        prev = t.score;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Whole-program evaluation

struct FitnessReport {
    bool failed = false;  // program could not be compiled or scored
    std::map<int, double> raw_per_q;
    std::map<int, int> chosen_r;
    std::map<int, std::vector<double>> trained_params;
    std::map<int, std::vector<double>> per_pair_scores;
    double f_raw = 0.0;
    struct Penalties {
        double gates = 0.0;
        double oracle_calls = 0.0;
        double params = 0.0;
        double jsd = 0.0;
        double total() const { return gates + oracle_calls + params + jsd; }
    } penalties;
    double f_total = -std::numeric_limits<double>::infinity();

    /// Smallest per-pair score across every size, -inf for failed reports.
    double min_pair_score() const {
        if (failed) return -std::numeric_limits<double>::infinity();
        double m = std::numeric_limits<double>::infinity();
        for (const auto& [q, scores] : per_pair_scores)
            for (double s : scores) m = std::min(m, s);
        return m;
    }
};

/// Full fitness of a program on a task's training set: per-size repetition
/// search and training, worst-size raw fitness, minus complexity and
/// score-skew penalties. Programs that fail validation or compilation get a
/// failed report with f_total = -inf.
inline FitnessReport evaluate(const MotifProgram& program, const TrainingSet& tset,
                              const PenaltyWeights& weights = {}, const TrainOptions& opts = {}) {
    FitnessReport report;
    if (tset.by_q.empty()) throw ValidationError("training set has no sizes");
    try {
        program.validate();
        int total_gates = 0;
        int total_params = 0;
        // oracle use is judged per repetition body, so the true Grover
        // structure (one call per iteration) carries no penalty at any r
        int oracle_excess = std::max(0, oracle_call_count(program) - 1);
        std::vector<double> pooled;
        report.f_raw = std::numeric_limits<double>::infinity();
        for (const auto& [q, pairs] : tset.by_q) {
            int max_r = tset.single_repetition ? 1 : q;
            auto rr = repetition_search(program, q, pairs, max_r, opts);
            CircuitIR circuit = instantiate(program, q, rr.r);
            auto scores = pair_scores(circuit, rr.params, pairs);
            double mean = 0.0;
            for (double s : scores) mean += s;
            mean /= static_cast<double>(scores.size());

            report.raw_per_q[q] = mean;
            report.chosen_r[q] = rr.r;
            report.trained_params[q] = rr.params;
            report.per_pair_scores[q] = scores;
            report.f_raw = std::min(report.f_raw, mean);
            pooled.insert(pooled.end(), scores.begin(), scores.end());

            total_gates += static_cast<int>(circuit.gates.size());
            total_params += circuit.param_slots;
        }
        report.penalties.gates = weights.gate * total_gates;
        report.penalties.params = weights.param * total_params;
        report.penalties.oracle_calls = weights.oracle * oracle_excess;
        report.penalties.jsd = weights.jsd * jsd_penalty(pooled);
        report.f_total = report.f_raw - report.penalties.total();
    } catch (const ValidationError&) {
        report = FitnessReport{};
        report.failed = true;
    }
    return report;
}

}  // namespace qsynth
