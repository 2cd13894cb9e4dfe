#pragma once

// Evolutionary search over motif programs: configuration-space sampling,
// sine-scheduled random/tournament selection, the four mutation operators,
// batched parallel evaluation, and the growing-population search loop with
// checkpointable state.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "qsynth/dsl.hpp"
#include "qsynth/fitness.hpp"
#include "qsynth/tasks.hpp"

namespace qsynth {

using Rng = std::mt19937_64;

// Hand-rolled draws: the standard distributions are not bit-stable across
// library implementations, and seeded reruns must reproduce exactly.
inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
    if (n == 0) throw ValidationError("rand_below needs a positive bound");
    return rng() % n;
}

inline double rand_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// by value: vector<bool> hands out proxies, not references
template <class T>
T pick(Rng& rng, const std::vector<T>& values) {
    if (values.empty()) throw ConfigError("empty choice set");
    return values[static_cast<std::size_t>(rand_below(rng, values.size()))];
}

// ---------------------------------------------------------------------------
// Configuration space

enum class SpaceTier { Small, Medium, Large, Huge, Custom };

inline std::string_view tier_name(SpaceTier t) {
    switch (t) {
    case SpaceTier::Small:  return "small";
    case SpaceTier::Medium: return "medium";
    case SpaceTier::Large:  return "large";
    case SpaceTier::Huge:   return "huge";
    case SpaceTier::Custom: return "custom";
    }
    return "?";
}

inline SpaceTier tier_from_name(const std::string& s) {
    if (s == "small") return SpaceTier::Small;
    if (s == "medium") return SpaceTier::Medium;
    if (s == "large") return SpaceTier::Large;
    if (s == "huge") return SpaceTier::Huge;
    if (s == "custom") return SpaceTier::Custom;
    throw ConfigError("unknown tier '" + s + "'");
}

struct KindProbs {
    double cycle = 0.3;
    double pivot = 0.3;
    double mask = 0.15;
    double unmask = 0.05;
    double oracle = 0.2;

    double sum() const { return cycle + pivot + mask + unmask + oracle; }
};

/// Allowed property values for sampled primitives, plus motif-kind
/// probabilities. This is the discrete search space of one run.
struct ConfigurationSpace {
    SpaceTier tier = SpaceTier::Custom;
    std::vector<std::string> patterns;
    std::vector<UnitaryKind> unitaries;
    std::vector<int> strides;
    std::vector<int> steps;
    std::vector<int> offsets;
    std::vector<Boundary> boundaries;
    std::vector<EdgeOrder> edge_orders;
    std::vector<bool> merge_choices;
    std::vector<bool> share_weight_choices;
    KindProbs kind_probs;

    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("configuration space: ") + what);
        };
        need(!patterns.empty(), "no patterns");
        need(!unitaries.empty(), "no unitaries");
        need(!strides.empty(), "no strides");
        need(!steps.empty(), "no steps");
        need(!offsets.empty(), "no offsets");
        need(!boundaries.empty(), "no boundaries");
        need(!edge_orders.empty(), "no edge orders");
        need(!merge_choices.empty(), "no merge choices");
        need(!share_weight_choices.empty(), "no share_weights choices");
        for (const auto& p : patterns) Pattern{p};  // throws on malformed specs
        for (auto u : unitaries)
            need(u != UnitaryKind::Oracle, "ORACLE cannot be a cycle/pivot unitary");
        for (int s : strides) need(s >= 1, "stride < 1");
        for (int s : steps) need(s >= 1, "step < 1");
        for (int o : offsets) need(o >= 0, "offset < 0");
        const KindProbs& k = kind_probs;
        need(k.cycle >= 0 && k.pivot >= 0 && k.mask >= 0 && k.unmask >= 0 && k.oracle >= 0,
             "negative kind probability");
        need(std::abs(k.sum() - 1.0) < 1e-6, "kind probabilities must sum to 1");
    }

    /// Copy with the oracle kind removed and the rest renormalized, for
    /// tasks that supply no oracle.
    ConfigurationSpace without_oracle() const {
        ConfigurationSpace cs = *this;
        cs.kind_probs.oracle = 0.0;
        double s = cs.kind_probs.sum();
        if (s <= 0.0) throw ConfigError("configuration space has only the oracle kind");
        cs.kind_probs.cycle /= s;
        cs.kind_probs.pivot /= s;
        cs.kind_probs.mask /= s;
        cs.kind_probs.unmask /= s;
        return cs;
    }
};

// ---------------------------------------------------------------------------
// Space serialization

inline nlohmann::json space_to_json(const ConfigurationSpace& cs) {
    nlohmann::json j;
    j["schema"] = "qsynth-space-v1";
    j["tier"] = std::string(tier_name(cs.tier));
    j["patterns"] = cs.patterns;
    nlohmann::json units = nlohmann::json::array();
    for (auto u : cs.unitaries) units.push_back(std::string(unitary_name(u)));
    j["unitaries"] = std::move(units);
    j["strides"] = cs.strides;
    j["steps"] = cs.steps;
    j["offsets"] = cs.offsets;
    nlohmann::json bounds = nlohmann::json::array();
    for (auto b : cs.boundaries) bounds.push_back(b == Boundary::Open ? "open" : "periodic");
    j["boundaries"] = std::move(bounds);
    nlohmann::json orders = nlohmann::json::array();
    for (auto e : cs.edge_orders)
        orders.push_back(e == EdgeOrder::PivotFirst ? "pivot_first" : "pivot_last");
    j["edge_orders"] = std::move(orders);
    j["merge"] = cs.merge_choices;
    j["share_weights"] = cs.share_weight_choices;
    j["kind_probs"] = {{"cycle", cs.kind_probs.cycle},
                       {"pivot", cs.kind_probs.pivot},
                       {"mask", cs.kind_probs.mask},
                       {"unmask", cs.kind_probs.unmask},
                       {"oracle", cs.kind_probs.oracle}};
    return j;
}

inline ConfigurationSpace space_from_json(const nlohmann::json& j) {
    try {
        if (j.value("schema", "") != "qsynth-space-v1")
            throw ConfigError("space file: missing or unsupported schema tag");
        ConfigurationSpace cs;
        cs.tier = tier_from_name(j.value("tier", "custom"));
        cs.patterns = j.at("patterns").get<std::vector<std::string>>();
        for (const auto& name : j.at("unitaries")) {
            auto u = unitary_from_name(name.get<std::string>());
            if (!u) throw ConfigError("space file: unknown unitary " + name.dump());
            cs.unitaries.push_back(*u);
        }
        cs.strides = j.at("strides").get<std::vector<int>>();
        cs.steps = j.at("steps").get<std::vector<int>>();
        cs.offsets = j.at("offsets").get<std::vector<int>>();
        for (const auto& name : j.at("boundaries")) {
            std::string s = name.get<std::string>();
            if (s == "open") cs.boundaries.push_back(Boundary::Open);
            else if (s == "periodic") cs.boundaries.push_back(Boundary::Periodic);
            else throw ConfigError("space file: unknown boundary '" + s + "'");
        }
        for (const auto& name : j.at("edge_orders")) {
            std::string s = name.get<std::string>();
            if (s == "pivot_first") cs.edge_orders.push_back(EdgeOrder::PivotFirst);
            else if (s == "pivot_last") cs.edge_orders.push_back(EdgeOrder::PivotLast);
            else throw ConfigError("space file: unknown edge order '" + s + "'");
        }
        cs.merge_choices = j.at("merge").get<std::vector<bool>>();
        cs.share_weight_choices = j.at("share_weights").get<std::vector<bool>>();
        const auto& kp = j.at("kind_probs");
        cs.kind_probs.cycle = kp.at("cycle").get<double>();
        cs.kind_probs.pivot = kp.at("pivot").get<double>();
        cs.kind_probs.mask = kp.at("mask").get<double>();
        cs.kind_probs.unmask = kp.at("unmask").get<double>();
        cs.kind_probs.oracle = kp.at("oracle").get<double>();
        cs.validate();
        return cs;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("space file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Sampling

inline MotifKind sample_kind(const ConfigurationSpace& cs, Rng& rng) {
    const KindProbs& k = cs.kind_probs;
    double u = rand_unit(rng) * k.sum();
    if ((u -= k.cycle) < 0) return MotifKind::Cycle;
    if ((u -= k.pivot) < 0) return MotifKind::Pivot;
    if ((u -= k.mask) < 0) return MotifKind::Mask;
    if ((u -= k.unmask) < 0) return MotifKind::Unmask;
    return MotifKind::OracleCall;
}

inline MotifPrimitive sample_primitive(const ConfigurationSpace& cs, Rng& rng) {
    MotifPrimitive p;
    p.kind = sample_kind(cs, rng);
    switch (p.kind) {
    case MotifKind::Cycle:
        p.unitary = UnitarySpec::of(pick(rng, cs.unitaries));
        p.stride = pick(rng, cs.strides);
        p.step = pick(rng, cs.steps);
        p.offset = pick(rng, cs.offsets);
        p.boundary = pick(rng, cs.boundaries);
        p.share_weights = pick(rng, cs.share_weight_choices);
        break;
    case MotifKind::Pivot:
        p.unitary = UnitarySpec::of(pick(rng, cs.unitaries));
        p.pattern = Pattern(pick(rng, cs.patterns));
        p.merge = pick(rng, cs.merge_choices);
        p.edge_order = pick(rng, cs.edge_orders);
        p.share_weights = pick(rng, cs.share_weight_choices);
        break;
    case MotifKind::Mask:
        p.pattern = Pattern(pick(rng, cs.patterns));
        break;
    case MotifKind::Unmask:
        p.pattern = Pattern(pick(rng, cs.patterns));
        break;
    case MotifKind::OracleCall:
        break;
    }
    p.validate();
    return p;
}

inline MotifProgram sample_program(const ConfigurationSpace& cs, int n_motifs, Rng& rng) {
    if (n_motifs < 1) throw ValidationError("sampled program needs at least one motif");
    MotifProgram prog;
    prog.body.reserve(static_cast<std::size_t>(n_motifs));
    for (int i = 0; i < n_motifs; ++i) prog.body.push_back(sample_primitive(cs, rng));
    return prog;
}

// ---------------------------------------------------------------------------
// Candidates and hyperparameters

enum class MutationKind { Init, Property, Insert, Dropout, ChopJoin };

inline std::string_view mutation_name(MutationKind m) {
    switch (m) {
    case MutationKind::Init:     return "init";
    case MutationKind::Property: return "property";
    case MutationKind::Insert:   return "insert";
    case MutationKind::Dropout:  return "dropout";
    case MutationKind::ChopJoin: return "chop_join";
    }
    return "?";
}

inline MutationKind mutation_from_name(const std::string& s) {
    if (s == "init") return MutationKind::Init;
    if (s == "property") return MutationKind::Property;
    if (s == "insert") return MutationKind::Insert;
    if (s == "dropout") return MutationKind::Dropout;
    if (s == "chop_join") return MutationKind::ChopJoin;
    throw ConfigError("unknown mutation '" + s + "'");
}

struct Candidate {
    std::uint64_t id = 0;
    int generation = 0;
    MutationKind mutation = MutationKind::Init;
    std::vector<std::uint64_t> parents;
    MotifProgram program;
    FitnessReport report;
};

struct HyperParams {
    int init_size = 200;
    std::vector<int> init_motif_counts = {2, 3};
    int n_batch = 4;
    double tournament_pressure = 0.05;
    double explore_period = 200.0;
    double explore_floor = 0.1;
    double explore_ceiling = 0.9;
    std::optional<double> stop_threshold;  // unset: use the task default
    int max_oracle_calls = 1;
    double max_runtime_seconds = std::numeric_limits<double>::infinity();
    std::uint64_t max_evaluations = 0;  // unique fitness computations, 0: unlimited
    int max_generations = 0;            // 0: unlimited
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (init_size < 2) throw ConfigError("init_size must be at least 2");
        if (init_motif_counts.empty()) throw ConfigError("init_motif_counts is empty");
        for (int c : init_motif_counts)
            if (c < 1) throw ConfigError("init motif count < 1");
        if (n_batch < 1) throw ConfigError("n_batch must be positive");
        if (!(tournament_pressure > 0.0 && tournament_pressure <= 1.0))
            throw ConfigError("tournament_pressure must be in (0, 1]");
        if (explore_period <= 0.0) throw ConfigError("explore period must be positive");
        if (!(0.0 <= explore_floor && explore_floor <= explore_ceiling && explore_ceiling <= 1.0))
            throw ConfigError("explore schedule needs 0 <= floor <= ceiling <= 1");
        if (max_oracle_calls < 0) throw ConfigError("max_oracle_calls must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// Selection

/// Probability of taking the random-selection branch at generation t:
/// starts at the ceiling, dips to the floor half a period later.
inline double explore_probability(double t, const HyperParams& hp) {
    if (t < 0.0) throw ValidationError("schedule argument must be non-negative");
    double wave = (1.0 + std::cos(2.0 * std::numbers::pi * t / hp.explore_period)) / 2.0;
    return hp.explore_floor + (hp.explore_ceiling - hp.explore_floor) * wave;
}

/// Picks two distinct parents. With probability `phase` both are uniform
/// draws; otherwise ceil(pressure*|pop|) entrants (at least 2, without
/// replacement) compete and the two highest f_total win, ties to lower id.
inline std::pair<std::size_t, std::size_t> select(const std::vector<Candidate>& pop, double phase,
                                                  double pressure, Rng& rng) {
    const std::size_t n = pop.size();
    if (n < 2) throw ValidationError("selection needs at least two candidates");
    if (rand_unit(rng) < phase) {
        std::size_t i = static_cast<std::size_t>(rand_below(rng, n));
        std::size_t j = static_cast<std::size_t>(rand_below(rng, n - 1));
        if (j >= i) ++j;
        return {i, j};
    }
    std::size_t k = static_cast<std::size_t>(
        std::ceil(pressure * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 2, n);

    std::vector<std::size_t> entrants;
    entrants.reserve(k);
    if (k * 2 >= n) {
        // dense draw: partial shuffle of the full index range
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rand_below(rng, n - i));
            std::swap(idx[i], idx[j]);
            entrants.push_back(idx[i]);
        }
    } else {
        std::unordered_set<std::size_t> chosen;
        while (entrants.size() < k) {
            std::size_t i = static_cast<std::size_t>(rand_below(rng, n));
            if (chosen.insert(i).second) entrants.push_back(i);
        }
    }

    auto better = [&pop](std::size_t a, std::size_t b) {
        double fa = pop[a].report.f_total;
        double fb = pop[b].report.f_total;
        if (fa != fb) return fa > fb;
        return pop[a].id < pop[b].id;
    };
    std::size_t first = entrants[0];
    std::size_t second = entrants[1];
    if (better(second, first)) std::swap(first, second);
    for (std::size_t i = 2; i < entrants.size(); ++i) {
        std::size_t e = entrants[i];
        if (better(e, first)) {
            second = first;
            first = e;
        } else if (better(e, second)) {
            second = e;
        }
    }
    return {first, second};
}

// ---------------------------------------------------------------------------
// Mutations

namespace detail {

/// Resamples one property of the primitive at `index` to a different
/// allowed value. Returns false when no property there has an alternative.
inline bool reroll_property(MotifProgram& prog, std::size_t index, const ConfigurationSpace& cs,
                            Rng& rng) {
    MotifPrimitive& prim = prog.body[index];

    // property ids per kind, counting only those with >= 2 allowed values
    std::vector<int> options;
    auto offer = [&options](int id, std::size_t set_size) {
        if (set_size >= 2) options.push_back(id);
    };
    switch (prim.kind) {
    case MotifKind::Cycle:
        offer(0, cs.unitaries.size());
        offer(1, cs.strides.size());
        offer(2, cs.steps.size());
        offer(3, cs.offsets.size());
        offer(4, cs.boundaries.size());
        offer(5, cs.share_weight_choices.size());
        break;
    case MotifKind::Pivot:
        offer(0, cs.unitaries.size());
        offer(6, cs.patterns.size());
        offer(7, cs.merge_choices.size());
        offer(8, cs.edge_orders.size());
        offer(5, cs.share_weight_choices.size());
        break;
    case MotifKind::Mask:
    case MotifKind::Unmask:
        offer(6, cs.patterns.size());
        break;
    case MotifKind::OracleCall:
        break;
    }
    if (options.empty()) return false;

    int id = pick(rng, options);
    // draw among the values different from the current one
    auto reroll = [&rng](auto& field, const auto& choices) {
        using V = std::remove_reference_t<decltype(field)>;
        std::vector<V> alts;
        for (const auto& c : choices)
            if (!(static_cast<V>(c) == field)) alts.push_back(static_cast<V>(c));
        if (!alts.empty()) field = pick(rng, alts);
    };
    switch (id) {
    case 0: {
        UnitaryKind symbol = prim.unitary->symbol;
        reroll(symbol, cs.unitaries);
        prim.unitary = UnitarySpec::of(symbol);
        break;
    }
    case 1: reroll(prim.stride, cs.strides); break;
    case 2: reroll(prim.step, cs.steps); break;
    case 3: reroll(prim.offset, cs.offsets); break;
    case 4: reroll(prim.boundary, cs.boundaries); break;
    case 5: reroll(prim.share_weights, cs.share_weight_choices); break;
    case 6: {
        std::string spec = prim.pattern->spec();
        reroll(spec, cs.patterns);
        prim.pattern = Pattern(spec);
        break;
    }
    case 7: reroll(prim.merge, cs.merge_choices); break;
    case 8: reroll(prim.edge_order, cs.edge_orders); break;
    }
    return true;
}

}  // namespace detail

/// Picks a primitive uniformly; with probability 1/2 changes one of its
/// properties to a different allowed value, otherwise (or when nothing can
/// change) replaces the whole primitive with a fresh sample.
inline MotifProgram mutate_property(const MotifProgram& p, const ConfigurationSpace& cs, Rng& rng) {
    MotifProgram out = p;
    std::size_t index = static_cast<std::size_t>(rand_below(rng, out.body.size()));
    bool try_property = rand_unit(rng) < 0.5;
    if (try_property && detail::reroll_property(out, index, cs, rng)) return out;
    out.body[index] = sample_primitive(cs, rng);
    return out;
}

/// Inserts a fresh sample at a uniform position.
inline MotifProgram mutate_insert(const MotifProgram& p, const ConfigurationSpace& cs, Rng& rng) {
    MotifProgram out = p;
    std::size_t pos = static_cast<std::size_t>(rand_below(rng, out.body.size() + 1));
    out.body.insert(out.body.begin() + static_cast<std::ptrdiff_t>(pos),
                    sample_primitive(cs, rng));
    return out;
}

/// Removes a uniform primitive; single-motif bodies pass through unchanged.
inline MotifProgram mutate_dropout(const MotifProgram& p, Rng& rng) {
    MotifProgram out = p;
    if (out.body.size() < 2) return out;
    std::size_t pos = static_cast<std::size_t>(rand_below(rng, out.body.size()));
    out.body.erase(out.body.begin() + static_cast<std::ptrdiff_t>(pos));
    return out;
}

/// Cuts both parents at uniform points and swaps heads. Cut points that
/// would produce an empty child are redrawn up to five times, after which
/// the parents are returned unchanged. Each child keeps the repetition
/// spec of its tail's parent.
inline std::pair<MotifProgram, MotifProgram> chop_and_join(const MotifProgram& p1,
                                                           const MotifProgram& p2, Rng& rng) {
    const std::size_t len1 = p1.body.size();
    const std::size_t len2 = p2.body.size();
    for (int attempt = 0; attempt < 5; ++attempt) {
        std::size_t c1 = static_cast<std::size_t>(rand_below(rng, len1 + 1));
        std::size_t c2 = static_cast<std::size_t>(rand_below(rng, len2 + 1));
        bool empty1 = c2 == 0 && c1 == len1;       // head(p2,c2) + tail(p1,c1)
        bool empty2 = c1 == 0 && c2 == len2;       // head(p1,c1) + tail(p2,c2)
        if (empty1 || empty2) continue;
        MotifProgram child1;
        child1.body.assign(p2.body.begin(), p2.body.begin() + static_cast<std::ptrdiff_t>(c2));
        child1.body.insert(child1.body.end(), p1.body.begin() + static_cast<std::ptrdiff_t>(c1),
                           p1.body.end());
        child1.repetitions = p1.repetitions;
        MotifProgram child2;
        child2.body.assign(p1.body.begin(), p1.body.begin() + static_cast<std::ptrdiff_t>(c1));
        child2.body.insert(child2.body.end(), p2.body.begin() + static_cast<std::ptrdiff_t>(c2),
                           p2.body.end());
        child2.repetitions = p2.repetitions;
        return {std::move(child1), std::move(child2)};
    }
    return {p1, p2};
}

struct ChildProgram {
    MotifProgram program;
    MutationKind mutation;
    std::vector<std::uint64_t> parents;
};

/// The fixed batch of eight children from one selected pair: two crossover
/// children, then property, insert, and dropout applied to each parent.
inline std::vector<ChildProgram> make_children(const Candidate& m1, const Candidate& m2,
                                               const ConfigurationSpace& cs, Rng& rng) {
    std::vector<ChildProgram> out;
    out.reserve(8);
    auto both = std::vector<std::uint64_t>{m1.id, m2.id};
    auto [c1, c2] = chop_and_join(m1.program, m2.program, rng);
    out.push_back({std::move(c1), MutationKind::ChopJoin, both});
    out.push_back({std::move(c2), MutationKind::ChopJoin, both});
    out.push_back({mutate_property(m1.program, cs, rng), MutationKind::Property, {m1.id}});
    out.push_back({mutate_property(m2.program, cs, rng), MutationKind::Property, {m2.id}});
    out.push_back({mutate_insert(m1.program, cs, rng), MutationKind::Insert, {m1.id}});
    out.push_back({mutate_insert(m2.program, cs, rng), MutationKind::Insert, {m2.id}});
    out.push_back({mutate_dropout(m1.program, rng), MutationKind::Dropout, {m1.id}});
    out.push_back({mutate_dropout(m2.program, rng), MutationKind::Dropout, {m2.id}});
    return out;
}

// ---------------------------------------------------------------------------
// Stopping

/// True when the candidate clears the per-pair threshold everywhere and,
/// for oracle tasks, calls the oracle at most `max_oracle_calls` times per
/// repetition body.
inline bool candidate_succeeds(const Candidate& c, double threshold, bool oracle_task,
                               int max_oracle_calls) {
    if (c.report.failed) return false;
    if (oracle_task && oracle_call_count(c.program) > max_oracle_calls) return false;
    return c.report.min_pair_score() > threshold;
}

inline std::optional<std::size_t> find_success(const std::vector<Candidate>& pop, double threshold,
                                               bool oracle_task, int max_oracle_calls) {
    for (std::size_t i = 0; i < pop.size(); ++i)
        if (candidate_succeeds(pop[i], threshold, oracle_task, max_oracle_calls)) return i;
    return std::nullopt;
}

inline bool stopping_condition(const std::vector<Candidate>& pop, const HyperParams& hp,
                               bool oracle_task, double threshold, double elapsed_seconds) {
    if (elapsed_seconds > hp.max_runtime_seconds) return true;
    return find_success(pop, threshold, oracle_task, hp.max_oracle_calls).has_value();
}

// ---------------------------------------------------------------------------
// Search state and loop

/// Everything needed to continue a run: the full population, counters, and
/// the serialized generator.
struct SearchState {
    std::vector<Candidate> population;
    int generation = 0;
    std::uint64_t next_id = 0;
    std::uint64_t unique_evaluations = 0;
    std::string rng_state;
};

struct GenerationLog {
    int generation = 0;
    std::size_t population = 0;
    std::uint64_t evaluations = 0;         // nominal: every appended candidate
    std::uint64_t unique_evaluations = 0;  // actual fitness computations
    double explore_p = 0.0;
    double max_f_total = -std::numeric_limits<double>::infinity();
    std::uint64_t best_id = 0;
    std::vector<double> top_f;  // descending, at most 200 entries
};

struct SearchOptions {
    int jobs = 1;
    TrainOptions train;
    PenaltyWeights weights;
    int checkpoint_interval = 0;  // generations between checkpoints, 0 = never
    std::function<void(const GenerationLog&)> on_generation;
    std::function<void(const SearchState&)> on_checkpoint;
};

struct SearchResult {
    SearchState state;
    std::optional<std::uint64_t> success_id;
    std::uint64_t best_id = 0;
    bool timed_out = false;
    std::string stop_reason;  // success | timeout | evaluation_budget | generation_budget
    double elapsed_seconds = 0.0;
};

namespace detail {

template <class F>
inline void parallel_for(std::size_t count, int jobs, F&& fn) {
    if (count == 0) return;
    std::size_t workers = static_cast<std::size_t>(std::max(1, jobs));
    workers = std::min(workers, count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

class SearchDriver {
public:
    SearchDriver(const TaskSpec& task, const ConfigurationSpace& cs, const HyperParams& hp,
                 const SearchOptions& opts)
        : task_(task), space_(task.uses_oracle ? cs : cs.without_oracle()), hp_(hp), opts_(opts),
          tset_(task.build()),
          threshold_(hp.stop_threshold.value_or(task.stop_threshold)) {
        space_.validate();
        hp_.validate();
    }

    SearchResult run() {
        start_ = std::chrono::steady_clock::now();
        rng_.seed(hp_.rng_seed);
        initialize();
        return loop();
    }

    SearchResult resume(SearchState state) {
        start_ = std::chrono::steady_clock::now();
        std::istringstream is(state.rng_state);
        is >> rng_;
        if (!is) throw ConfigError("checkpoint holds an unreadable generator state");
        state_ = std::move(state);
        for (const auto& c : state_.population) absorb(c);
        return loop();
    }

private:
    TaskSpec task_;
    ConfigurationSpace space_;
    HyperParams hp_;
    SearchOptions opts_;
    TrainingSet tset_;
    double threshold_;

    Rng rng_;
    SearchState state_;
    std::chrono::steady_clock::time_point start_;
    std::unordered_map<std::string, FitnessReport> memo_;
    std::multiset<double> top_;
    double max_f_ = -std::numeric_limits<double>::infinity();
    std::uint64_t best_id_ = 0;
    bool have_best_ = false;
    std::optional<std::uint64_t> success_id_;

    double elapsed() const {
        std::chrono::duration<double> d = std::chrono::steady_clock::now() - start_;
        return d.count();
    }

    // Folds an appended candidate into the caches and running statistics.
    void absorb(const Candidate& c) {
        memo_.try_emplace(print_program(c.program), c.report);
        top_.insert(c.report.f_total);
        if (top_.size() > 200) top_.erase(top_.begin());
        if (!have_best_ || c.report.f_total > max_f_) {
            max_f_ = c.report.f_total;
            best_id_ = c.id;
            have_best_ = true;
        }
        if (!success_id_ && candidate_succeeds(c, threshold_, task_.uses_oracle,
                                               hp_.max_oracle_calls))
            success_id_ = c.id;
    }

    void append_batch(std::vector<ChildProgram>&& children, int generation) {
        // evaluate unseen programs once, in parallel, then append in order
        std::vector<std::string> keys;
        keys.reserve(children.size());
        std::vector<std::size_t> to_eval;
        std::unordered_map<std::string, std::size_t> batch_first;
        for (std::size_t i = 0; i < children.size(); ++i) {
            keys.push_back(print_program(children[i].program));
            if (!memo_.count(keys[i]) && batch_first.emplace(keys[i], i).second)
                to_eval.push_back(i);
        }
        std::vector<FitnessReport> fresh(to_eval.size());
        parallel_for(to_eval.size(), opts_.jobs, [&](std::size_t i) {
            fresh[i] = evaluate(children[to_eval[i]].program, tset_, opts_.weights, opts_.train);
        });
        state_.unique_evaluations += to_eval.size();
        std::unordered_map<std::string, const FitnessReport*> fresh_by_key;
        for (std::size_t i = 0; i < to_eval.size(); ++i)
            fresh_by_key.emplace(keys[to_eval[i]], &fresh[i]);

        for (std::size_t i = 0; i < children.size(); ++i) {
            Candidate c;
            c.id = state_.next_id++;
            c.generation = generation;
            c.mutation = children[i].mutation;
            c.parents = std::move(children[i].parents);
            c.program = std::move(children[i].program);
            if (auto it = memo_.find(keys[i]); it != memo_.end()) c.report = it->second;
            else c.report = *fresh_by_key.at(keys[i]);
            absorb(c);
            state_.population.push_back(std::move(c));
        }
    }

    void initialize() {
        std::vector<ChildProgram> init;
        init.reserve(static_cast<std::size_t>(hp_.init_size));
        for (int i = 0; i < hp_.init_size; ++i) {
            int n_motifs = pick(rng_, hp_.init_motif_counts);
            init.push_back({sample_program(space_, n_motifs, rng_), MutationKind::Init, {}});
        }
        append_batch(std::move(init), 0);
        state_.generation = 0;
        log_generation(0, hp_.explore_ceiling);
    }

    void log_generation(int g, double phase) {
        if (!opts_.on_generation) return;
        GenerationLog entry;
        entry.generation = g;
        entry.population = state_.population.size();
        entry.evaluations = state_.population.size();
        entry.unique_evaluations = state_.unique_evaluations;
        entry.explore_p = phase;
        entry.max_f_total = max_f_;
        entry.best_id = best_id_;
        entry.top_f.assign(top_.rbegin(), top_.rend());
        opts_.on_generation(entry);
    }

    void checkpoint_if_due(int g) {
        if (!opts_.on_checkpoint || opts_.checkpoint_interval <= 0) return;
        if (g % opts_.checkpoint_interval != 0) return;
        serialize_rng();
        opts_.on_checkpoint(state_);
    }

    void serialize_rng() {
        std::ostringstream os;
        os << rng_;
        state_.rng_state = os.str();
    }

    SearchResult finish(const std::string& reason) {
        serialize_rng();
        SearchResult result;
        result.success_id = success_id_;
        result.best_id = success_id_ ? *success_id_ : best_id_;
        result.timed_out = reason == "timeout";
        result.stop_reason = reason;
        result.elapsed_seconds = elapsed();
        result.state = std::move(state_);
        return result;
    }

    SearchResult loop() {
        const std::uint64_t batch = 8ull * static_cast<std::uint64_t>(hp_.n_batch);
        while (true) {
            if (success_id_) return finish("success");
            if (elapsed() > hp_.max_runtime_seconds) return finish("timeout");
            // duplicates resolve through the memo, so the budget bounds the
            // actual fitness computations; stop while the next batch could
            // still fit entirely
            if (hp_.max_evaluations > 0
                && state_.unique_evaluations + batch > hp_.max_evaluations)
                return finish("evaluation_budget");
            if (hp_.max_generations > 0 && state_.generation >= hp_.max_generations)
                return finish("generation_budget");

            const int g = state_.generation + 1;
            const double phase = explore_probability(static_cast<double>(g - 1), hp_);
            std::vector<ChildProgram> children;
            children.reserve(batch);
            for (int b = 0; b < hp_.n_batch; ++b) {
                auto [i, j] = select(state_.population, phase, hp_.tournament_pressure, rng_);
                auto batch_children =
                    make_children(state_.population[i], state_.population[j], space_, rng_);
                for (auto& c : batch_children) children.push_back(std::move(c));
            }
            append_batch(std::move(children), g);
            state_.generation = g;
            log_generation(g, phase);
            checkpoint_if_due(g);
        }
    }
};

}  // namespace detail

/// One full evolutionary run per the growing-population scheme: seeded
/// initialization, then batches of 8*n_batch children per generation until
/// a candidate passes the stopping test or a budget runs out.
inline SearchResult run_search(const TaskSpec& task, const ConfigurationSpace& cs,
                               const HyperParams& hp, const SearchOptions& opts = {}) {
    detail::SearchDriver driver(task, cs, hp, opts);
    return driver.run();
}

/// Continues a checkpointed run. Bit-exact with the uninterrupted run when
/// training is step-capped and no wall-clock budget is set.
inline SearchResult resume_search(SearchState state, const TaskSpec& task,
                                  const ConfigurationSpace& cs, const HyperParams& hp,
                                  const SearchOptions& opts = {}) {
    detail::SearchDriver driver(task, cs, hp, opts);
    return driver.resume(std::move(state));
}

}  // namespace qsynth
