#pragma once

// Motif DSL: the five structural primitives (cycle, pivot, mask, unmask,
// oracle call), their properties, and the program container with its
// text form (print/parse round-trip is exact).

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qsynth {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int column)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ", column "
                             + std::to_string(column) + ")"),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// ---------------------------------------------------------------------------
// Unitaries

enum class UnitaryKind { H, X, Z, CP, MCX, Oracle };

/// Arity marker for unitaries that act on any number of qubits.
inline constexpr int kVariadic = -1;

struct UnitarySpec {
    UnitaryKind symbol;
    int arity;        // kVariadic for MCX and ORACLE
    int param_count;  // continuous parameters per application

    bool variadic() const { return arity == kVariadic; }
    bool operator==(const UnitarySpec&) const = default;

    static constexpr UnitarySpec of(UnitaryKind k) {
        switch (k) {
        case UnitaryKind::H:      return {UnitaryKind::H, 1, 0};
        case UnitaryKind::X:      return {UnitaryKind::X, 1, 0};
        case UnitaryKind::Z:      return {UnitaryKind::Z, 1, 0};
        case UnitaryKind::CP:     return {UnitaryKind::CP, 2, 1};
        case UnitaryKind::MCX:    return {UnitaryKind::MCX, kVariadic, 0};
        case UnitaryKind::Oracle: return {UnitaryKind::Oracle, kVariadic, 0};
        }
        return {UnitaryKind::H, 1, 0};  // unreachable
    }
};

inline std::string_view unitary_name(UnitaryKind k) {
    switch (k) {
    case UnitaryKind::H:      return "H";
    case UnitaryKind::X:      return "X";
    case UnitaryKind::Z:      return "Z";
    case UnitaryKind::CP:     return "CP";
    case UnitaryKind::MCX:    return "MCX";
    case UnitaryKind::Oracle: return "ORACLE";
    }
    return "?";
}

inline std::optional<UnitaryKind> unitary_from_name(std::string_view s) {
    if (s == "H") return UnitaryKind::H;
    if (s == "X") return UnitaryKind::X;
    if (s == "Z") return UnitaryKind::Z;
    if (s == "CP") return UnitaryKind::CP;
    if (s == "MCX") return UnitaryKind::MCX;
    if (s == "ORACLE") return UnitaryKind::Oracle;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Patterns

/// A qubit-selection string over {0, 1, *} with at most one '*'.
///
/// Resolution against n qubits: a lone "*" selects everything; otherwise a
/// '*' expands to the run of '0' that pads the spec to length n (possibly
/// empty), and a star-free spec tiles cyclically. Positions past n are cut.
class Pattern {
public:
    Pattern() : spec_("*") {}
    explicit Pattern(std::string spec) : spec_(std::move(spec)) {
        if (spec_.empty())
            throw ValidationError("pattern spec is empty");
        int stars = 0;
        for (char c : spec_) {
            if (c == '*') ++stars;
            else if (c != '0' && c != '1')
                throw ValidationError("pattern spec has invalid character '"
                                      + std::string(1, c) + "'");
        }
        if (stars > 1)
            throw ValidationError("pattern spec has more than one '*'");
    }

    const std::string& spec() const { return spec_; }

    /// Positions selected among n slots, as indices into [0, n).
    std::vector<int> resolve(int n) const {
        if (n < 1)
            throw ValidationError("pattern resolved against non-positive slot count");
        std::string expanded;
        auto star = spec_.find('*');
        if (spec_ == "*") {
            expanded.assign(static_cast<std::size_t>(n), '1');
        } else if (star != std::string::npos) {
            int fill = n - static_cast<int>(spec_.size()) + 1;
            if (fill < 0) fill = 0;
            expanded = spec_.substr(0, star) + std::string(static_cast<std::size_t>(fill), '0')
                       + spec_.substr(star + 1);
        } else {
            expanded.reserve(static_cast<std::size_t>(n));
            while (static_cast<int>(expanded.size()) < n) expanded += spec_;
        }
        std::vector<int> out;
        int limit = std::min<int>(n, static_cast<int>(expanded.size()));
        for (int i = 0; i < limit; ++i)
            if (expanded[static_cast<std::size_t>(i)] == '1') out.push_back(i);
        return out;
    }

    bool operator==(const Pattern&) const = default;

private:
    std::string spec_;
};

inline std::vector<int> resolve_pattern(const Pattern& p, int n) { return p.resolve(n); }

// ---------------------------------------------------------------------------
// Primitives

enum class MotifKind { Cycle, Pivot, Mask, Unmask, OracleCall };

enum class Boundary { Open, Periodic };
enum class EdgeOrder { PivotLast, PivotFirst };

inline std::string_view motif_kind_name(MotifKind k) {
    switch (k) {
    case MotifKind::Cycle:      return "QCycle";
    case MotifKind::Pivot:      return "QPivot";
    case MotifKind::Mask:       return "QMask";
    case MotifKind::Unmask:     return "QUnmask";
    case MotifKind::OracleCall: return "Oracle";
    }
    return "?";
}

struct MotifPrimitive {
    MotifKind kind = MotifKind::Cycle;
    std::optional<UnitarySpec> unitary;  // cycle, pivot
    std::optional<Pattern> pattern;      // pivot, mask, unmask

    // cycle placement
    int stride = 1;
    int step = 1;
    int offset = 0;
    Boundary boundary = Boundary::Periodic;

    // pivot placement
    EdgeOrder edge_order = EdgeOrder::PivotLast;
    bool merge = false;

    // parameterized unitaries reuse one angle across the primitive when set
    bool share_weights = false;

    bool operator==(const MotifPrimitive&) const = default;

    static MotifPrimitive cycle(UnitaryKind u) {
        MotifPrimitive p;
        p.kind = MotifKind::Cycle;
        p.unitary = UnitarySpec::of(u);
        p.validate();
        return p;
    }
    static MotifPrimitive pivot(UnitaryKind u, const std::string& pattern) {
        MotifPrimitive p;
        p.kind = MotifKind::Pivot;
        p.unitary = UnitarySpec::of(u);
        p.pattern = Pattern(pattern);
        p.validate();
        return p;
    }
    static MotifPrimitive mask(const std::string& pattern) {
        MotifPrimitive p;
        p.kind = MotifKind::Mask;
        p.pattern = Pattern(pattern);
        p.validate();
        return p;
    }
    static MotifPrimitive unmask(const std::string& pattern) {
        MotifPrimitive p;
        p.kind = MotifKind::Unmask;
        p.pattern = Pattern(pattern);
        p.validate();
        return p;
    }
    static MotifPrimitive oracle() {
        MotifPrimitive p;
        p.kind = MotifKind::OracleCall;
        p.validate();
        return p;
    }

    void validate() const {
        switch (kind) {
        case MotifKind::Cycle:
            if (!unitary) throw ValidationError("cycle requires a unitary");
            if (pattern) throw ValidationError("cycle carries no pattern");
            break;
        case MotifKind::Pivot:
            if (!unitary) throw ValidationError("pivot requires a unitary");
            if (!pattern) throw ValidationError("pivot requires a pattern");
            break;
        case MotifKind::Mask:
        case MotifKind::Unmask:
            if (unitary) throw ValidationError("mask/unmask carries no unitary");
            if (!pattern) throw ValidationError("mask/unmask requires a pattern");
            break;
        case MotifKind::OracleCall:
            if (unitary) throw ValidationError("oracle call carries no unitary");
            if (pattern) throw ValidationError("oracle call carries no pattern");
            break;
        }
        if (unitary && unitary->symbol == UnitaryKind::Oracle)
            throw ValidationError("ORACLE is applied through the oracle-call primitive");
        if (stride < 1) throw ValidationError("stride must be positive");
        if (step < 1) throw ValidationError("step must be positive");
        if (offset < 0) throw ValidationError("offset must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// Programs

/// Repetition count of a program body: a fixed integer, or learned per size
/// during evaluation (printed as "r").
class Repetitions {
public:
    Repetitions() = default;  // learned

    static Repetitions fixed(int k) {
        if (k < 1) throw ValidationError("fixed repetition count must be positive");
        Repetitions r;
        r.count_ = k;
        return r;
    }
    static Repetitions learned() { return Repetitions{}; }

    bool is_learned() const { return !count_.has_value(); }
    int count() const {
        if (!count_) throw ValidationError("repetitions are learned, not fixed");
        return *count_;
    }

    bool operator==(const Repetitions&) const = default;

private:
    std::optional<int> count_;
};

struct MotifProgram {
    std::vector<MotifPrimitive> body;
    Repetitions repetitions;

    bool operator==(const MotifProgram&) const = default;

    void validate() const {
        if (body.empty()) throw ValidationError("program body is empty");
        for (const auto& prim : body) prim.validate();
    }
};

/// Oracle calls per repetition of the body.
inline int oracle_call_count(const MotifProgram& p) {
    int n = 0;
    for (const auto& prim : p.body)
        if (prim.kind == MotifKind::OracleCall) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline void print_properties(std::ostream& os, const MotifPrimitive& p) {
    if (p.kind == MotifKind::Cycle) {
        if (p.stride != 1) os << ", stride=" << p.stride;
        if (p.step != 1) os << ", step=" << p.step;
        if (p.offset != 0) os << ", offset=" << p.offset;
        if (p.boundary != Boundary::Periodic) os << ", boundary=open";
    }
    if (p.kind == MotifKind::Pivot) {
        if (p.edge_order != EdgeOrder::PivotLast) os << ", edge_order=pivot_first";
        if (p.merge) os << ", merge=true";
    }
    if ((p.kind == MotifKind::Cycle || p.kind == MotifKind::Pivot) && p.share_weights)
        os << ", share_weights=true";
}

}  // namespace detail

inline std::string print_primitive(const MotifPrimitive& p) {
    std::ostringstream os;
    os << motif_kind_name(p.kind);
    switch (p.kind) {
    case MotifKind::Cycle:
        os << '(' << unitary_name(p.unitary->symbol);
        detail::print_properties(os, p);
        os << ')';
        break;
    case MotifKind::Pivot:
        os << '(' << unitary_name(p.unitary->symbol) << ", \"" << p.pattern->spec() << '"';
        detail::print_properties(os, p);
        os << ')';
        break;
    case MotifKind::Mask:
    case MotifKind::Unmask:
        os << "(\"" << p.pattern->spec() << "\")";
        break;
    case MotifKind::OracleCall:
        break;  // bare keyword
    }
    return os.str();
}

/// One primitive per line; the final line carries " * k" or " * r".
inline std::string print_program(const MotifProgram& p) {
    p.validate();
    std::ostringstream os;
    for (std::size_t i = 0; i < p.body.size(); ++i) {
        os << print_primitive(p.body[i]);
        if (i + 1 == p.body.size()) {
            os << " * ";
            if (p.repetitions.is_learned()) os << 'r';
            else os << p.repetitions.count();
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class ProgramParser {
public:
    explicit ProgramParser(std::string_view text) : text_(text) {}

    MotifProgram parse() {
        MotifProgram prog;
        skip_space();
        while (!at_end()) {
            if (!prog.body.empty() && peek() == '+') {
                // primitives separate by newline and/or '+'
                advance();
                skip_space();
                if (at_end()) fail("expected a primitive after '+'");
            }
            prog.body.push_back(parse_primitive());
            skip_blank();
            if (!at_end() && peek() == '*') {
                advance();
                skip_blank();
                prog.repetitions = parse_repetitions();
                skip_space();
                if (!at_end()) fail("trailing input after repetition marker");
                break;
            }
            skip_space();
        }
        if (prog.body.empty()) fail("program has no primitives");
        prog.validate();
        return prog;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    char advance() {
        char c = text_[pos_++];
        if (c == '\n') { ++line_; col_ = 1; }
        else ++col_;
        return c;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }

    void skip_blank() {  // spaces and tabs only
        while (!at_end() && (peek() == ' ' || peek() == '\t')) advance();
    }
    void skip_space() {  // any whitespace
        while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r'))
            advance();
    }

    std::string parse_word() {
        std::string w;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
            w += advance();
        if (w.empty()) fail("expected identifier");
        return w;
    }

    int parse_int() {
        std::string digits;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) digits += advance();
        if (digits.empty()) fail("expected integer");
        try {
            return std::stoi(digits);
        } catch (const std::exception&) {
            fail("integer out of range");
        }
    }

    void expect(char c) {
        if (at_end() || peek() != c)
            fail(std::string("expected '") + c + "'");
        advance();
    }

    std::string parse_quoted() {
        expect('"');
        std::string s;
        while (!at_end() && peek() != '"') s += advance();
        expect('"');
        return s;
    }

    UnitaryKind parse_unitary() {
        auto word = parse_word();
        auto u = unitary_from_name(word);
        if (!u) fail("unknown unitary '" + word + "'");
        if (*u == UnitaryKind::Oracle) fail("ORACLE is not available as a cycle/pivot unitary");
        return *u;
    }

    Repetitions parse_repetitions() {
        if (!at_end() && peek() == 'r') {
            advance();
            return Repetitions::learned();
        }
        int k = parse_int();
        if (k < 1) fail("repetition count must be positive");
        return Repetitions::fixed(k);
    }

    void parse_property(MotifPrimitive& prim, std::vector<std::string>& seen) {
        auto key = parse_word();
        for (const auto& s : seen)
            if (s == key) fail("duplicate property '" + key + "'");
        seen.push_back(key);
        skip_blank();
        expect('=');
        skip_blank();
        bool is_cycle = prim.kind == MotifKind::Cycle;
        bool is_pivot = prim.kind == MotifKind::Pivot;
        if (key == "stride" && is_cycle) {
            prim.stride = parse_int();
        } else if (key == "step" && is_cycle) {
            prim.step = parse_int();
        } else if (key == "offset" && is_cycle) {
            prim.offset = parse_int();
        } else if (key == "boundary" && is_cycle) {
            auto v = parse_word();
            if (v == "open") prim.boundary = Boundary::Open;
            else if (v == "periodic") prim.boundary = Boundary::Periodic;
            else fail("boundary must be open or periodic");
        } else if (key == "edge_order" && is_pivot) {
            auto v = parse_word();
            if (v == "pivot_first") prim.edge_order = EdgeOrder::PivotFirst;
            else if (v == "pivot_last") prim.edge_order = EdgeOrder::PivotLast;
            else fail("edge_order must be pivot_first or pivot_last");
        } else if (key == "merge" && is_pivot) {
            prim.merge = parse_bool();
        } else if (key == "share_weights" && (is_cycle || is_pivot)) {
            prim.share_weights = parse_bool();
        } else {
            fail("property '" + key + "' does not apply here");
        }
    }

    bool parse_bool() {
        auto v = parse_word();
        if (v == "true") return true;
        if (v == "false") return false;
        fail("expected true or false");
    }

    MotifPrimitive parse_primitive() {
        auto head = parse_word();
        MotifPrimitive prim;
        if (head == "Oracle") {
            prim.kind = MotifKind::OracleCall;
            return prim;
        }
        if (head == "QCycle") prim.kind = MotifKind::Cycle;
        else if (head == "QPivot") prim.kind = MotifKind::Pivot;
        else if (head == "QMask") prim.kind = MotifKind::Mask;
        else if (head == "QUnmask") prim.kind = MotifKind::Unmask;
        else fail("unknown motif '" + head + "'");

        expect('(');
        skip_blank();
        if (prim.kind == MotifKind::Cycle || prim.kind == MotifKind::Pivot) {
            prim.unitary = UnitarySpec::of(parse_unitary());
            if (prim.kind == MotifKind::Pivot) {
                skip_blank();
                expect(',');
                skip_blank();
                prim.pattern = parse_pattern();
            }
        } else {
            prim.pattern = parse_pattern();
        }
        skip_blank();
        std::vector<std::string> seen;
        while (!at_end() && peek() == ',') {
            advance();
            skip_blank();
            parse_property(prim, seen);
            skip_blank();
        }
        expect(')');
        prim.validate();
        return prim;
    }

    Pattern parse_pattern() {
        auto s = parse_quoted();
        try {
            return Pattern(s);
        } catch (const ValidationError& e) {
            fail(e.what());
        }
    }
};

}  // namespace detail

/// Inverse of print_program; also accepts '+'-separated single-line bodies.
inline MotifProgram parse_program(std::string_view text) {
    return detail::ProgramParser(text).parse();
}

}  // namespace qsynth
