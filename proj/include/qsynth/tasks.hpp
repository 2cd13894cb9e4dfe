#pragma once

// Training-set builders for the three benchmark targets (Fourier transform,
// Deutsch-Jozsa, Grover search), their oracles, the reference programs, and
// a small registry for config-defined task variants.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsynth/dsl.hpp"
#include "qsynth/fitness.hpp"
#include "qsynth/sim.hpp"

namespace qsynth {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A benchmark: circuit sizes, per-size training pairs, and search-level
/// settings (repetition cap, oracle use, stopping threshold).
struct TaskSpec {
    std::string name;
    std::vector<int> sizes;
    std::function<std::vector<TrainingPair>(int)> pair_builder;
    bool uses_oracle = false;
    bool single_repetition = false;
    double stop_threshold = 0.99;

    TrainingSet build() const {
        if (sizes.empty()) throw ConfigError("task '" + name + "' has no circuit sizes");
        TrainingSet t;
        t.single_repetition = single_repetition;
        for (int q : sizes) t.by_q[q] = pair_builder(q);
        return t;
    }
};

// ---------------------------------------------------------------------------
// Oracles

/// Bit-flip oracle |x>|a> -> |x>|a XOR f(x)> over the first q-1 qubits,
/// with the last qubit as ancilla. `truth` lists f over x = 0..2^(q-1)-1.
inline std::shared_ptr<const OracleImpl> make_bitflip_oracle(int q, std::vector<int> truth) {
    if (q < 2) throw ValidationError("bit-flip oracle needs an input register plus ancilla");
    const std::size_t inputs = std::size_t{1} << (q - 1);
    if (truth.size() != inputs) throw ValidationError("truth table size mismatch");
    std::string label = "f=";
    for (int v : truth) label += v ? '1' : '0';
    auto impl = std::make_shared<OracleImpl>();
    impl->label = std::move(label);
    impl->apply = [q, truth = std::move(truth)](Statevector& state) {
        if (state.n_qubits() != q)
            throw ValidationError("oracle applied to a mismatched register");
        // the ancilla is the last qubit, i.e. the lowest bit of the index
        for (std::uint64_t b = 0; b < state.dim(); b += 2)
            if (truth[b >> 1]) std::swap(state[b], state[b | 1]);
    };
    return impl;
}

/// Phase oracle that flips the sign of one marked basis state.
inline std::shared_ptr<const OracleImpl> make_phaseflip_oracle(int q, std::uint64_t marked) {
    if (q < 1) throw ValidationError("phase oracle needs at least one qubit");
    if (marked >= (std::uint64_t{1} << q)) throw ValidationError("marked state out of range");
    auto impl = std::make_shared<OracleImpl>();
    impl->label = "mark=" + std::to_string(marked);
    impl->apply = [q, marked](Statevector& state) {
        if (state.n_qubits() != q)
            throw ValidationError("oracle applied to a mismatched register");
        state[marked] = -state[marked];
    };
    return impl;
}

// ---------------------------------------------------------------------------
// Pair builders

/// Fourier-transform pairs: each basis state maps to the transform the
/// reference circuit realizes, which is the bit-reversed discrete Fourier
/// transform under the qubit-0-is-MSB convention (target amplitude at basis
/// b is omega^(x*rev(b))/sqrt(N)); plus the uniform-to-zero pair.
inline std::vector<TrainingPair> build_qft(int q) {
    if (q < 1) throw ValidationError("qft needs at least one qubit");
    const std::uint64_t dim = std::uint64_t{1} << q;
    auto reverse_bits = [q](std::uint64_t v) {
        std::uint64_t r = 0;
        for (int i = 0; i < q; ++i)
            if (v & (std::uint64_t{1} << i)) r |= std::uint64_t{1} << (q - 1 - i);
        return r;
    };
    std::vector<TrainingPair> pairs;
    pairs.reserve(dim + 1);
    for (std::uint64_t x = 0; x < dim; ++x) {
        Statevector target(q);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        for (std::uint64_t b = 0; b < dim; ++b) {
            double angle = 2.0 * std::numbers::pi
                           * static_cast<double>(x * reverse_bits(b) % dim)
                           / static_cast<double>(dim);
            target[b] = std::polar(scale, angle);
        }
        pairs.emplace_back(Statevector::basis(q, x), std::move(target));
    }
    pairs.emplace_back(Statevector::uniform(q), Statevector(q));
    return pairs;
}

namespace detail {

inline void balanced_tables(int inputs, std::vector<std::vector<int>>& out) {
    // all 0/1 tables of length `inputs` with exactly inputs/2 ones,
    // in lexicographic order
    std::vector<int> table(static_cast<std::size_t>(inputs), 0);
    std::function<void(int, int)> rec = [&](int pos, int ones) {
        int remaining = inputs - pos;
        int needed = inputs / 2 - ones;
        if (needed < 0 || needed > remaining) return;
        if (pos == inputs) {
            out.push_back(table);
            return;
        }
        table[static_cast<std::size_t>(pos)] = 0;
        rec(pos + 1, ones);
        table[static_cast<std::size_t>(pos)] = 1;
        rec(pos + 1, ones + 1);
        table[static_cast<std::size_t>(pos)] = 0;
    };
    rec(0, 0);
}

}  // namespace detail

/// Deutsch-Jozsa pairs at total size q (q-1 input qubits + ancilla). For
/// each balanced function: one pair with scalar target 0, followed by one
/// constant-function pair with scalar target 1. Inputs are |0...0>.
inline std::vector<TrainingPair> build_dj(int q) {
    if (q < 2) throw ValidationError("deutsch-jozsa needs q >= 2");
    const int inputs = 1 << (q - 1);
    std::vector<std::vector<int>> tables;
    detail::balanced_tables(inputs, tables);
    auto constant = make_bitflip_oracle(q, std::vector<int>(static_cast<std::size_t>(inputs), 0));
    std::vector<TrainingPair> pairs;
    pairs.reserve(tables.size() * 2);
    for (auto& table : tables) {
        pairs.emplace_back(Statevector(q), 0.0, make_bitflip_oracle(q, std::move(table)));
        pairs.emplace_back(Statevector(q), 1.0, constant);
    }
    return pairs;
}

/// Grover pairs: for each basis state m, uniform input, target |m>, and a
/// phase oracle marking m.
inline std::vector<TrainingPair> build_grover(int q) {
    if (q < 2) throw ValidationError("grover needs q >= 2");
    const std::uint64_t dim = std::uint64_t{1} << q;
    std::vector<TrainingPair> pairs;
    pairs.reserve(dim);
    for (std::uint64_t m = 0; m < dim; ++m)
        pairs.emplace_back(Statevector::uniform(q), Statevector::basis(q, m),
                           make_phaseflip_oracle(q, m));
    return pairs;
}

// ---------------------------------------------------------------------------
// Reference programs

/// The known-good motif programs for the three benchmarks.
inline std::map<std::string, MotifProgram> reference_programs() {
    std::map<std::string, MotifProgram> out;
    {
        MotifProgram qft;
        qft.body = {
            MotifPrimitive::pivot(UnitaryKind::H, "1*"),
            MotifPrimitive::pivot(UnitaryKind::CP, "1*"),
            MotifPrimitive::mask("1*"),
        };
        out["qft"] = std::move(qft);
    }
    {
        MotifProgram dj;
        dj.body = {
            MotifPrimitive::cycle(UnitaryKind::H),
            MotifPrimitive::pivot(UnitaryKind::Z, "*1"),
            MotifPrimitive::oracle(),
            MotifPrimitive::pivot(UnitaryKind::Z, "*1"),
            MotifPrimitive::cycle(UnitaryKind::H),
        };
        dj.repetitions = Repetitions::fixed(1);
        out["deutsch_jozsa"] = std::move(dj);
    }
    {
        MotifProgram grover;
        grover.body = {
            MotifPrimitive::oracle(),
            MotifPrimitive::cycle(UnitaryKind::H),
            MotifPrimitive::cycle(UnitaryKind::X),
            MotifPrimitive::pivot(UnitaryKind::H, "*1"),
            MotifPrimitive::pivot(UnitaryKind::MCX, "*1"),
            MotifPrimitive::pivot(UnitaryKind::H, "*1"),
            MotifPrimitive::cycle(UnitaryKind::X),
            MotifPrimitive::cycle(UnitaryKind::H),
        };
        out["grover"] = std::move(grover);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registry

inline TaskSpec qft_task() {
    TaskSpec t;
    t.name = "qft";
    t.sizes = {2, 3, 4};
    t.pair_builder = build_qft;
    t.stop_threshold = 0.99;
    return t;
}

inline TaskSpec dj_task() {
    TaskSpec t;
    t.name = "deutsch_jozsa";
    t.sizes = {2, 3, 4};
    t.pair_builder = build_dj;
    t.uses_oracle = true;
    t.single_repetition = true;
    t.stop_threshold = 0.99;
    return t;
}

inline TaskSpec grover_task() {
    TaskSpec t;
    t.name = "grover";
    t.sizes = {3, 4, 5};
    t.pair_builder = build_grover;
    t.uses_oracle = true;
    t.stop_threshold = 0.9;  // below the q=3 ceiling sin^2(5*asin(1/sqrt 8))
    return t;
}

inline const std::vector<std::string>& builtin_task_names() {
    static const std::vector<std::string> names = {"qft", "deutsch_jozsa", "grover"};
    return names;
}

inline TaskSpec task_by_name(const std::string& name) {
    if (name == "qft") return qft_task();
    if (name == "deutsch_jozsa") return dj_task();
    if (name == "grover") return grover_task();
    throw ConfigError("unknown task '" + name + "'");
}

/// Task from a config object: either {"name": "<builtin>"} or a customized
/// builtin with overridden sizes / threshold, e.g.
/// {"name": "grover3", "builder": "grover", "sizes": [3], "stop_threshold": 0.9}.
inline TaskSpec task_from_json(const nlohmann::json& j) {
    if (j.is_string()) return task_by_name(j.get<std::string>());
    if (!j.is_object()) throw ConfigError("task must be a name or an object");
    std::string builder = j.contains("builder") ? j.at("builder").get<std::string>()
                                                : j.at("name").get<std::string>();
    TaskSpec t = task_by_name(builder);
    if (j.contains("name")) t.name = j.at("name").get<std::string>();
    if (j.contains("sizes")) {
        t.sizes = j.at("sizes").get<std::vector<int>>();
        if (t.sizes.empty()) throw ConfigError("task sizes must be non-empty");
        for (int q : t.sizes)
            if (q < 1 || q > 20) throw ConfigError("task size out of range: " + std::to_string(q));
    }
    if (j.contains("stop_threshold")) t.stop_threshold = j.at("stop_threshold").get<double>();
    return t;
}

}  // namespace qsynth
