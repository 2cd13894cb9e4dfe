#pragma once

// Dense statevector simulation of compiled circuits, plus analytic
// gradients of overlap scores via the parameter-shift rule.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "qsynth/compiler.hpp"
#include "qsynth/dsl.hpp"

namespace qsynth {

/// Amplitudes over computational basis states. Qubit 0 is the most
/// significant bit of the basis index, so |q0 q1 ... q_{n-1}> lives at
/// index q0*2^{n-1} + ... + q_{n-1}.
class Statevector {
public:
    explicit Statevector(int n_qubits) : n_(check(n_qubits)), amp_(std::size_t{1} << n_) {
        amp_[0] = 1.0;
    }

    static Statevector basis(int n_qubits, std::uint64_t index) {
        Statevector s(n_qubits);
        if (index >= s.dim())
            throw ValidationError("basis index out of range");
        s.amp_[0] = 0.0;
        s.amp_[index] = 1.0;
        return s;
    }

    static Statevector uniform(int n_qubits) {
        Statevector s(n_qubits);
        double a = 1.0 / std::sqrt(static_cast<double>(s.dim()));
        for (auto& v : s.amp_) v = a;
        return s;
    }

    int n_qubits() const { return n_; }
    std::size_t dim() const { return amp_.size(); }

    std::complex<double>& operator[](std::size_t i) { return amp_[i]; }
    const std::complex<double>& operator[](std::size_t i) const { return amp_[i]; }

    std::vector<std::complex<double>>& amplitudes() { return amp_; }
    const std::vector<std::complex<double>>& amplitudes() const { return amp_; }

    double norm() const {
        double s = 0.0;
        for (const auto& v : amp_) s += std::norm(v);
        return std::sqrt(s);
    }

    /// Bit mask selecting `qubit` within a basis index.
    std::uint64_t mask_of(int qubit) const {
        if (qubit < 0 || qubit >= n_)
            throw ValidationError("qubit index out of range");
        return std::uint64_t{1} << (n_ - 1 - qubit);
    }

private:
    static int check(int n) {
        if (n < 1) throw ValidationError("statevector needs at least one qubit");
        if (n > 26) throw ValidationError("statevector too large");
        return n;
    }

    int n_;
    std::vector<std::complex<double>> amp_;
};

/// A task-supplied black-box unitary acting on the full register.
struct OracleImpl {
    std::string label;
    std::function<void(Statevector&)> apply;
};

inline double fidelity(const Statevector& a, const Statevector& b) {
    if (a.n_qubits() != b.n_qubits())
        throw ValidationError("fidelity of mismatched statevectors");
    std::complex<double> ip = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) ip += std::conj(a[i]) * b[i];
    return std::norm(ip);
}

// ---------------------------------------------------------------------------
// Gate application

inline void apply_gate(Statevector& state, const UnitarySpec& unitary,
                       const std::vector<int>& qubits, double angle = 0.0) {
    const std::size_t dim = state.dim();
    switch (unitary.symbol) {
    case UnitaryKind::H: {
        const std::uint64_t m = state.mask_of(qubits.at(0));
        const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
        for (std::size_t b = 0; b < dim; ++b) {
            if (b & m) continue;
            auto a0 = state[b];
            auto a1 = state[b | m];
            state[b] = (a0 + a1) * inv_sqrt2;
            state[b | m] = (a0 - a1) * inv_sqrt2;
        }
        break;
    }
    case UnitaryKind::X: {
        const std::uint64_t m = state.mask_of(qubits.at(0));
        for (std::size_t b = 0; b < dim; ++b) {
            if (b & m) continue;
            std::swap(state[b], state[b | m]);
        }
        break;
    }
    case UnitaryKind::Z: {
        const std::uint64_t m = state.mask_of(qubits.at(0));
        for (std::size_t b = 0; b < dim; ++b)
            if (b & m) state[b] = -state[b];
        break;
    }
    case UnitaryKind::CP: {
        if (qubits.size() != 2) throw ValidationError("CP acts on exactly two qubits");
        const std::uint64_t m = state.mask_of(qubits[0]) | state.mask_of(qubits[1]);
        if (state.mask_of(qubits[0]) == state.mask_of(qubits[1]))
            throw ValidationError("CP qubits must differ");
        const std::complex<double> phase = std::polar(1.0, angle);
        for (std::size_t b = 0; b < dim; ++b)
            if ((b & m) == m) state[b] *= phase;
        break;
    }
    case UnitaryKind::MCX: {
        if (qubits.empty()) throw ValidationError("MCX needs at least a target");
        const std::uint64_t target = state.mask_of(qubits.back());
        std::uint64_t controls = 0;
        for (std::size_t i = 0; i + 1 < qubits.size(); ++i) {
            const std::uint64_t m = state.mask_of(qubits[i]);
            if (m == target || (controls & m))
                throw ValidationError("MCX qubits must be distinct");
            controls |= m;
        }
        for (std::size_t b = 0; b < dim; ++b) {
            if ((b & controls) != controls) continue;
            if (b & target) continue;
            std::swap(state[b], state[b | target]);
        }
        break;
    }
    case UnitaryKind::Oracle:
        throw ValidationError("oracle gates are applied through an OracleImpl");
    }
}

// ---------------------------------------------------------------------------
// Circuit execution

namespace detail {

/// Runs `circuit`, optionally adding `delta` to the angle of the single gate
/// occurrence at index `shifted_gate` (parameter-shift support).
inline Statevector run_shifted(const CircuitIR& circuit, const std::vector<double>& params,
                               const Statevector& input, const OracleImpl* oracle,
                               std::ptrdiff_t shifted_gate, double delta) {
    if (input.n_qubits() != circuit.n_qubits)
        throw ValidationError("input statevector size does not match circuit");
    if (static_cast<int>(params.size()) != circuit.param_slots)
        throw ValidationError("expected " + std::to_string(circuit.param_slots)
                              + " parameters, got " + std::to_string(params.size()));
    Statevector state = input;
    for (std::size_t gi = 0; gi < circuit.gates.size(); ++gi) {
        const Gate& g = circuit.gates[gi];
        if (g.unitary.symbol == UnitaryKind::Oracle) {
            if (!oracle || !oracle->apply)
                throw ValidationError("circuit calls an oracle but none was provided");
            oracle->apply(state);
            continue;
        }
        double angle = 0.0;
        if (g.param_slot) {
            angle = params[static_cast<std::size_t>(*g.param_slot)];
            if (static_cast<std::ptrdiff_t>(gi) == shifted_gate) angle += delta;
        }
        apply_gate(state, g.unitary, g.qubits, angle);
    }
    return state;
}

}  // namespace detail

inline Statevector run_circuit(const CircuitIR& circuit, const std::vector<double>& params,
                               const Statevector& input, const OracleImpl* oracle = nullptr) {
    return detail::run_shifted(circuit, params, input, oracle, -1, 0.0);
}

// ---------------------------------------------------------------------------
// Gradients

/// Gradient of |<target|U(params)|input>|^2 with respect to each parameter
/// slot, by the parameter-shift rule. A slot reused by several gate
/// occurrences accumulates one shift term per occurrence, which is exact
/// for phase gates.
inline std::vector<double> grad_overlap(const CircuitIR& circuit, const std::vector<double>& params,
                                        const Statevector& input, const Statevector& target,
                                        const OracleImpl* oracle = nullptr) {
    std::vector<double> grad(static_cast<std::size_t>(circuit.param_slots), 0.0);
    constexpr double shift = std::numbers::pi / 2.0;
    for (std::size_t gi = 0; gi < circuit.gates.size(); ++gi) {
        const Gate& g = circuit.gates[gi];
        if (!g.param_slot) continue;
        auto plus = detail::run_shifted(circuit, params, input, oracle,
                                        static_cast<std::ptrdiff_t>(gi), shift);
        auto minus = detail::run_shifted(circuit, params, input, oracle,
                                         static_cast<std::ptrdiff_t>(gi), -shift);
        grad[static_cast<std::size_t>(*g.param_slot)] +=
            (fidelity(target, plus) - fidelity(target, minus)) / 2.0;
    }
    return grad;
}

}  // namespace qsynth
