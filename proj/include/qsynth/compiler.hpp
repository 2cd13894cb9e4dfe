#pragma once

// Instantiates a motif program at a concrete qubit count and repetition
// count, producing a flat gate list. Also exports circuits as OpenQASM 2.0
// and as JSON.

#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsynth/dsl.hpp"

namespace qsynth {

class ExportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The mutable compilation context: which of the n qubits are currently
/// visible to structural primitives. `available` stays sorted ascending.
struct QubitFrame {
    int total = 0;
    std::vector<int> available;

    static QubitFrame full(int n) {
        if (n < 1) throw ValidationError("qubit count must be positive");
        QubitFrame f;
        f.total = n;
        f.available.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) f.available[static_cast<std::size_t>(i)] = i;
        return f;
    }

    std::vector<int> masked() const {
        std::vector<int> out;
        std::size_t j = 0;
        for (int q = 0; q < total; ++q) {
            if (j < available.size() && available[j] == q) ++j;
            else out.push_back(q);
        }
        return out;
    }
};

struct Gate {
    UnitarySpec unitary;
    std::vector<int> qubits;
    std::optional<int> param_slot;

    bool operator==(const Gate&) const = default;
};

struct CircuitIR {
    int n_qubits = 0;
    std::vector<Gate> gates;
    int param_slots = 0;
    int oracle_calls = 0;
};

// ---------------------------------------------------------------------------
// Edge generation

/// Qubit tuples visited by a cycle over the current frame. Arity-1 unitaries
/// walk offset, offset+step, ...; wider unitaries pair each visited position
/// with the one `stride` further along (wrapping only under periodic
/// boundary). Degenerate pairs are dropped.
inline std::vector<std::vector<int>> edges_cycle(const MotifPrimitive& prim,
                                                 const QubitFrame& frame) {
    if (prim.kind != MotifKind::Cycle) throw ValidationError("edges_cycle needs a cycle");
    const auto& a = frame.available;
    const int L = static_cast<int>(a.size());
    std::vector<std::vector<int>> edges;
    if (L == 0) return edges;
    const bool single = prim.unitary->arity == 1;
    for (int i = prim.offset; i < L; i += prim.step) {
        if (single) {
            edges.push_back({a[static_cast<std::size_t>(i)]});
            continue;
        }
        int j = i + prim.stride;
        if (j >= L) {
            if (prim.boundary == Boundary::Open) continue;
            j %= L;
        }
        if (j == i) continue;
        edges.push_back({a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]});
    }
    return edges;
}

/// Qubit tuples for a pivot. The pattern selects pivot qubits P from the
/// ordered available list; the rest form R. Arity-1 unitaries land on P
/// alone. Fixed wider arities fan out one edge per qubit of R (or one merged
/// edge when `merge` is set); variadic unitaries always emit one merged
/// edge. `edge_order` places P last (default) or first within each tuple.
inline std::vector<std::vector<int>> edges_pivot(const MotifPrimitive& prim,
                                                 const QubitFrame& frame) {
    if (prim.kind != MotifKind::Pivot) throw ValidationError("edges_pivot needs a pivot");
    const auto& a = frame.available;
    const int L = static_cast<int>(a.size());
    std::vector<std::vector<int>> edges;
    if (L == 0) return edges;

    std::vector<int> pivot;
    for (int pos : prim.pattern->resolve(L)) pivot.push_back(a[static_cast<std::size_t>(pos)]);
    if (pivot.empty()) return edges;

    std::vector<int> rest;
    {
        std::size_t j = 0;
        for (int q : a) {
            if (j < pivot.size() && pivot[j] == q) ++j;
            else rest.push_back(q);
        }
    }

    if (prim.unitary->arity == 1) {
        for (int p : pivot) edges.push_back({p});
        return edges;
    }
    if (rest.empty()) return edges;

    const bool pivot_last = prim.edge_order == EdgeOrder::PivotLast;
    auto join = [&](const std::vector<int>& others) {
        std::vector<int> tuple;
        if (pivot_last) {
            tuple = others;
            tuple.insert(tuple.end(), pivot.begin(), pivot.end());
        } else {
            tuple = pivot;
            tuple.insert(tuple.end(), others.begin(), others.end());
        }
        return tuple;
    };

    if (prim.merge || prim.unitary->variadic()) {
        edges.push_back(join(rest));
    } else {
        for (int r : rest) edges.push_back(join({r}));
    }
    return edges;
}

/// Applies a mask or unmask to the frame. Mask removes pattern-selected
/// available qubits; unmask resolves its pattern against the ordered masked
/// list and restores the selected qubits to their original positions.
inline QubitFrame apply_mask(const MotifPrimitive& prim, QubitFrame frame) {
    if (prim.kind == MotifKind::Mask) {
        const int L = static_cast<int>(frame.available.size());
        if (L == 0) return frame;
        std::set<int> remove;
        for (int pos : prim.pattern->resolve(L))
            remove.insert(frame.available[static_cast<std::size_t>(pos)]);
        std::vector<int> kept;
        for (int q : frame.available)
            if (!remove.count(q)) kept.push_back(q);
        frame.available = std::move(kept);
        return frame;
    }
    if (prim.kind == MotifKind::Unmask) {
        auto hidden = frame.masked();
        if (hidden.empty()) return frame;
        std::set<int> restore;
        for (int pos : prim.pattern->resolve(static_cast<int>(hidden.size())))
            restore.insert(hidden[static_cast<std::size_t>(pos)]);
        std::vector<int> merged;
        std::size_t i = 0;
        auto it = restore.begin();
        while (i < frame.available.size() || it != restore.end()) {
            if (it == restore.end() || (i < frame.available.size() && frame.available[i] < *it))
                merged.push_back(frame.available[i++]);
            else
                merged.push_back(*it++);
        }
        frame.available = std::move(merged);
        return frame;
    }
    throw ValidationError("apply_mask needs a mask or unmask");
}

// ---------------------------------------------------------------------------
// Instantiation

namespace detail {

inline bool tuple_admissible(const UnitarySpec& u, const std::vector<int>& tuple) {
    if (u.variadic()) return !tuple.empty();
    return static_cast<int>(tuple.size()) == u.arity;
}

}  // namespace detail

/// Unrolls `program` over n qubits for r repetitions. The frame persists
/// across repetitions, so masks accumulate until unmasked. Each CP gate gets
/// a fresh parameter slot unless its primitive shares weights, in which case
/// all gates emitted by that primitive within one repetition share a slot.
inline CircuitIR instantiate(const MotifProgram& program, int n, int r) {
    program.validate();
    if (n < 1) throw ValidationError("qubit count must be positive");
    if (r < 1) throw ValidationError("repetition count must be positive");

    CircuitIR circuit;
    circuit.n_qubits = n;
    QubitFrame frame = QubitFrame::full(n);

    for (int rep = 0; rep < r; ++rep) {
        for (const auto& prim : program.body) {
            switch (prim.kind) {
            case MotifKind::Mask:
            case MotifKind::Unmask:
                frame = apply_mask(prim, frame);
                break;
            case MotifKind::OracleCall: {
                Gate g;
                g.unitary = UnitarySpec::of(UnitaryKind::Oracle);
                g.qubits.resize(static_cast<std::size_t>(n));
                for (int q = 0; q < n; ++q) g.qubits[static_cast<std::size_t>(q)] = q;
                circuit.gates.push_back(std::move(g));
                ++circuit.oracle_calls;
                break;
            }
            case MotifKind::Cycle:
            case MotifKind::Pivot: {
                auto edges = prim.kind == MotifKind::Cycle ? edges_cycle(prim, frame)
                                                           : edges_pivot(prim, frame);
                std::optional<int> shared_slot;
                for (auto& tuple : edges) {
                    if (!detail::tuple_admissible(*prim.unitary, tuple)) continue;
                    Gate g;
                    g.unitary = *prim.unitary;
                    g.qubits = std::move(tuple);
                    if (prim.unitary->param_count > 0) {
                        if (prim.share_weights) {
                            if (!shared_slot) shared_slot = circuit.param_slots++;
                            g.param_slot = shared_slot;
                        } else {
                            g.param_slot = circuit.param_slots++;
                        }
                    }
                    circuit.gates.push_back(std::move(g));
                }
                break;
            }
            }
        }
    }
    return circuit;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline std::string format_angle(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// OpenQASM 2.0 text for a fully lowered circuit. Circuits containing
/// ORACLE gates cannot be exported; MCX lowers to x/cx/ccx/c3x/c4x and
/// anything wider is rejected.
inline std::string export_qasm(const CircuitIR& circuit, const std::vector<double>& params) {
    if (static_cast<int>(params.size()) != circuit.param_slots)
        throw ExportError("expected " + std::to_string(circuit.param_slots)
                          + " parameters, got " + std::to_string(params.size()));
    std::ostringstream os;
    os << "OPENQASM 2.0;\n";
    os << "include \"qelib1.inc\";\n";
    os << "qreg q[" << circuit.n_qubits << "];\n";
    auto operand = [](int q) { return "q[" + std::to_string(q) + "]"; };
    for (const auto& g : circuit.gates) {
        switch (g.unitary.symbol) {
        case UnitaryKind::H:
            os << "h " << operand(g.qubits[0]) << ";\n";
            break;
        case UnitaryKind::X:
            os << "x " << operand(g.qubits[0]) << ";\n";
            break;
        case UnitaryKind::Z:
            os << "z " << operand(g.qubits[0]) << ";\n";
            break;
        case UnitaryKind::CP:
            os << "cu1(" << detail::format_angle(params[static_cast<std::size_t>(*g.param_slot)])
               << ") " << operand(g.qubits[0]) << "," << operand(g.qubits[1]) << ";\n";
            break;
        case UnitaryKind::MCX: {
            static const char* names[] = {"x", "cx", "ccx", "c3x", "c4x"};
            std::size_t controls = g.qubits.size() - 1;
            if (controls > 4)
                throw ExportError("MCX with more than 4 controls has no qelib1 lowering");
            os << names[controls] << " ";
            for (std::size_t i = 0; i < g.qubits.size(); ++i) {
                if (i) os << ",";
                os << operand(g.qubits[i]);
            }
            os << ";\n";
            break;
        }
        case UnitaryKind::Oracle:
            throw ExportError("circuit contains an unlowered oracle call");
        }
    }
    return os.str();
}

inline nlohmann::json circuit_to_json(const CircuitIR& circuit) {
    nlohmann::json gates = nlohmann::json::array();
    for (const auto& g : circuit.gates) {
        nlohmann::json jg;
        jg["u"] = std::string(unitary_name(g.unitary.symbol));
        jg["qubits"] = g.qubits;
        if (g.param_slot) jg["param"] = *g.param_slot;
        gates.push_back(std::move(jg));
    }
    return nlohmann::json{{"n_qubits", circuit.n_qubits},
                          {"param_slots", circuit.param_slots},
                          {"oracle_calls", circuit.oracle_calls},
                          {"gates", std::move(gates)}};
}

}  // namespace qsynth
