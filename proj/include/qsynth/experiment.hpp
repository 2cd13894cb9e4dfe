#pragma once

// Experiment plumbing around the search: config files, run directories,
// JSONL fitness logs, checkpoint/resume, lineage export, circuit rendering,
// and search-space accounting.

#include <boost/multiprecision/cpp_int.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsynth/compiler.hpp"
#include "qsynth/dsl.hpp"
#include "qsynth/evolve.hpp"
#include "qsynth/fitness.hpp"
#include "qsynth/tasks.hpp"

namespace qsynth {

using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------------------
// Search-space accounting

/// Distinct primitive configurations available to the sampler: per kind
/// with positive probability, the product of its property-set sizes.
inline BigInt primitive_config_count(const ConfigurationSpace& cs) {
    cs.validate();
    BigInt total = 0;
    if (cs.kind_probs.cycle > 0) {
        BigInt c = cs.unitaries.size();
        c *= cs.strides.size();
        c *= cs.steps.size();
        c *= cs.offsets.size();
        c *= cs.boundaries.size();
        c *= cs.share_weight_choices.size();
        total += c;
    }
    if (cs.kind_probs.pivot > 0) {
        BigInt c = cs.unitaries.size();
        c *= cs.patterns.size();
        c *= cs.merge_choices.size();
        c *= cs.edge_orders.size();
        c *= cs.share_weight_choices.size();
        total += c;
    }
    if (cs.kind_probs.mask > 0) total += cs.patterns.size();
    if (cs.kind_probs.unmask > 0) total += cs.patterns.size();
    if (cs.kind_probs.oracle > 0) total += 1;
    return total;
}

/// Number of programs with 1..n_motifs primitives: sum of C^k.
inline BigInt search_space_size(const ConfigurationSpace& cs, int n_motifs) {
    if (n_motifs < 1) throw ValidationError("n_motifs must be positive");
    BigInt c = primitive_config_count(cs);
    BigInt total = 0;
    BigInt power = 1;
    for (int k = 1; k <= n_motifs; ++k) {
        power *= c;
        total += power;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Report / candidate / state serialization

namespace detail {

template <class V>
nlohmann::json int_map_to_json(const std::map<int, V>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
}

template <class V>
std::map<int, V> int_map_from_json(const nlohmann::json& j) {
    std::map<int, V> m;
    for (auto it = j.begin(); it != j.end(); ++it)
        m[std::stoi(it.key())] = it.value().get<V>();
    return m;
}

}  // namespace detail

inline nlohmann::json report_to_json(const FitnessReport& r) {
    if (r.failed) return nlohmann::json{{"failed", true}};
    nlohmann::json j;
    j["failed"] = false;
    j["f_raw"] = r.f_raw;
    j["f_total"] = r.f_total;
    j["raw_per_q"] = detail::int_map_to_json(r.raw_per_q);
    j["chosen_r"] = detail::int_map_to_json(r.chosen_r);
    j["trained_params"] = detail::int_map_to_json(r.trained_params);
    j["per_pair_scores"] = detail::int_map_to_json(r.per_pair_scores);
    j["penalties"] = {{"gates", r.penalties.gates},
                      {"oracle_calls", r.penalties.oracle_calls},
                      {"params", r.penalties.params},
                      {"jsd", r.penalties.jsd}};
    return j;
}

inline FitnessReport report_from_json(const nlohmann::json& j) {
    FitnessReport r;
    if (j.value("failed", false)) {
        r.failed = true;
        return r;
    }
    r.f_raw = j.at("f_raw").get<double>();
    r.f_total = j.at("f_total").get<double>();
    r.raw_per_q = detail::int_map_from_json<double>(j.at("raw_per_q"));
    r.chosen_r = detail::int_map_from_json<int>(j.at("chosen_r"));
    r.trained_params = detail::int_map_from_json<std::vector<double>>(j.at("trained_params"));
    r.per_pair_scores = detail::int_map_from_json<std::vector<double>>(j.at("per_pair_scores"));
    const auto& p = j.at("penalties");
    r.penalties.gates = p.at("gates").get<double>();
    r.penalties.oracle_calls = p.at("oracle_calls").get<double>();
    r.penalties.params = p.at("params").get<double>();
    r.penalties.jsd = p.at("jsd").get<double>();
    return r;
}

inline nlohmann::json candidate_to_json(const Candidate& c) {
    return nlohmann::json{{"id", c.id},
                          {"generation", c.generation},
                          {"mutation", std::string(mutation_name(c.mutation))},
                          {"parents", c.parents},
                          {"program", print_program(c.program)},
                          {"report", report_to_json(c.report)}};
}

inline Candidate candidate_from_json(const nlohmann::json& j) {
    Candidate c;
    c.id = j.at("id").get<std::uint64_t>();
    c.generation = j.at("generation").get<int>();
    c.mutation = mutation_from_name(j.at("mutation").get<std::string>());
    c.parents = j.at("parents").get<std::vector<std::uint64_t>>();
    c.program = parse_program(j.at("program").get<std::string>());
    c.report = report_from_json(j.at("report"));
    return c;
}

inline nlohmann::json state_to_json(const SearchState& s) {
    nlohmann::json pop = nlohmann::json::array();
    for (const auto& c : s.population) pop.push_back(candidate_to_json(c));
    return nlohmann::json{{"schema", "qsynth-checkpoint-v1"},
                          {"generation", s.generation},
                          {"next_id", s.next_id},
                          {"unique_evaluations", s.unique_evaluations},
                          {"rng_state", s.rng_state},
                          {"population", std::move(pop)}};
}

inline SearchState state_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "qsynth-checkpoint-v1")
        throw ConfigError("checkpoint: missing or unsupported schema tag");
    SearchState s;
    s.generation = j.at("generation").get<int>();
    s.next_id = j.at("next_id").get<std::uint64_t>();
    s.unique_evaluations = j.at("unique_evaluations").get<std::uint64_t>();
    s.rng_state = j.at("rng_state").get<std::string>();
    for (const auto& jc : j.at("population")) s.population.push_back(candidate_from_json(jc));
    return s;
}

// ---------------------------------------------------------------------------
// HyperParams / options serialization

inline nlohmann::json hp_to_json(const HyperParams& hp) {
    nlohmann::json j;
    j["init_size"] = hp.init_size;
    j["init_motif_counts"] = hp.init_motif_counts;
    j["n_batch"] = hp.n_batch;
    j["tournament_pressure"] = hp.tournament_pressure;
    j["explore"] = {{"period", hp.explore_period},
                    {"floor", hp.explore_floor},
                    {"ceiling", hp.explore_ceiling}};
    if (hp.stop_threshold) j["stop_threshold"] = *hp.stop_threshold;
    else j["stop_threshold"] = nullptr;
    j["max_oracle_calls"] = hp.max_oracle_calls;
    if (std::isfinite(hp.max_runtime_seconds)) j["max_runtime_seconds"] = hp.max_runtime_seconds;
    else j["max_runtime_seconds"] = nullptr;
    j["max_evaluations"] = hp.max_evaluations;
    j["max_generations"] = hp.max_generations;
    return j;
}

inline HyperParams hp_from_json(const nlohmann::json& j) {
    HyperParams hp;
    hp.init_size = j.value("init_size", hp.init_size);
    if (j.contains("init_motif_counts"))
        hp.init_motif_counts = j.at("init_motif_counts").get<std::vector<int>>();
    hp.n_batch = j.value("n_batch", hp.n_batch);
    hp.tournament_pressure = j.value("tournament_pressure", hp.tournament_pressure);
    if (j.contains("explore")) {
        const auto& e = j.at("explore");
        hp.explore_period = e.value("period", hp.explore_period);
        hp.explore_floor = e.value("floor", hp.explore_floor);
        hp.explore_ceiling = e.value("ceiling", hp.explore_ceiling);
    }
    if (j.contains("stop_threshold") && !j.at("stop_threshold").is_null())
        hp.stop_threshold = j.at("stop_threshold").get<double>();
    hp.max_oracle_calls = j.value("max_oracle_calls", hp.max_oracle_calls);
    if (j.contains("max_runtime_seconds") && !j.at("max_runtime_seconds").is_null())
        hp.max_runtime_seconds = j.at("max_runtime_seconds").get<double>();
    hp.max_evaluations = j.value("max_evaluations", hp.max_evaluations);
    hp.max_generations = j.value("max_generations", hp.max_generations);
    hp.validate();
    return hp;
}

inline nlohmann::json weights_to_json(const PenaltyWeights& w) {
    return {{"gate", w.gate}, {"oracle", w.oracle}, {"param", w.param}, {"jsd", w.jsd}};
}

inline PenaltyWeights weights_from_json(const nlohmann::json& j) {
    PenaltyWeights w;
    w.gate = j.value("gate", w.gate);
    w.oracle = j.value("oracle", w.oracle);
    w.param = j.value("param", w.param);
    w.jsd = j.value("jsd", w.jsd);
    return w;
}

inline nlohmann::json train_to_json(const TrainOptions& t) {
    return {{"max_steps", t.max_steps},
            {"learning_rate", t.learning_rate},
            {"convergence_tol", t.convergence_tol},
            {"budget_seconds", t.budget_seconds}};
}

inline TrainOptions train_from_json(const nlohmann::json& j) {
    TrainOptions t;
    t.max_steps = j.value("max_steps", t.max_steps);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.convergence_tol = j.value("convergence_tol", t.convergence_tol);
    t.budget_seconds = j.value("budget_seconds", t.budget_seconds);
    return t;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
    nlohmann::json task_json;  // name string or customization object
    ConfigurationSpace space;
    HyperParams hp;
    PenaltyWeights weights;
    TrainOptions train;  // train.step_capped mirrors the top-level flag
    int jobs = 1;
    int checkpoint_interval = 50;
    std::string out_dir;

    TaskSpec task() const { return task_from_json(task_json); }
};

/// Resolves the "space" config entry: an inline object, a file path
/// (relative to the config file), or a bare tier name searched under
/// <config dir>/spaces/ and $QSYNTH_SPACES_DIR.
inline ConfigurationSpace load_space(const nlohmann::json& spec,
                                     const std::filesystem::path& base_dir) {
    namespace fs = std::filesystem;
    if (spec.is_object()) return space_from_json(spec);
    if (!spec.is_string()) throw ConfigError("space must be an object, path, or tier name");
    const std::string name = spec.get<std::string>();
    std::vector<fs::path> tries;
    tries.push_back(fs::path(name));
    tries.push_back(base_dir / name);
    tries.push_back(base_dir / "spaces" / (name + ".json"));
    if (const char* env = std::getenv("QSYNTH_SPACES_DIR"))
        tries.push_back(fs::path(env) / (name + ".json"));
    for (const auto& p : tries) {
        if (!fs::is_regular_file(p)) continue;
        std::ifstream in(p);
        nlohmann::json j;
        in >> j;
        return space_from_json(j);
    }
    throw ConfigError("space '" + name + "' not found (tried file paths and tier lookup)");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir) {
    try {
        if (j.value("schema", "") != "qsynth-config-v1")
            throw ConfigError("config: missing or unsupported schema tag");
        ExperimentConfig cfg;
        cfg.task_json = j.at("task");
        cfg.task();  // validate eagerly
        cfg.space = load_space(j.at("space"), base_dir);
        cfg.hp = j.contains("hyper") ? hp_from_json(j.at("hyper")) : HyperParams{};
        cfg.hp.rng_seed = j.value("seed", std::uint64_t{0});
        cfg.weights = j.contains("penalties") ? weights_from_json(j.at("penalties"))
                                              : PenaltyWeights{};
        cfg.train = j.contains("training") ? train_from_json(j.at("training")) : TrainOptions{};
        cfg.train.step_capped = j.value("step_capped", false);
        cfg.jobs = j.value("jobs", 1);
        cfg.checkpoint_interval = j.value("checkpoint_interval", 50);
        cfg.out_dir = j.value("out_dir", "");
        if (cfg.jobs < 1) throw ConfigError("jobs must be positive");
        if (cfg.checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["schema"] = "qsynth-config-v1";
    j["task"] = cfg.task_json;
    j["space"] = space_to_json(cfg.space);
    j["seed"] = cfg.hp.rng_seed;
    j["hyper"] = hp_to_json(cfg.hp);
    j["penalties"] = weights_to_json(cfg.weights);
    j["training"] = train_to_json(cfg.train);
    j["step_capped"] = cfg.train.step_capped;
    j["jobs"] = cfg.jobs;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
    return j;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.has_parent_path() ? path.parent_path()
                                                      : std::filesystem::path("."));
}

// ---------------------------------------------------------------------------
// Lineage export

/// DOT digraph of the ancestor closure of `best_id`. Nodes carry f_total,
/// edges carry the child's mutation kind.
inline std::string export_lineage(const std::vector<Candidate>& population,
                                  std::uint64_t best_id) {
    std::map<std::uint64_t, const Candidate*> by_id;
    for (const auto& c : population) by_id[c.id] = &c;
    if (!by_id.count(best_id)) throw ValidationError("best candidate not in population");

    std::set<std::uint64_t> closure;
    std::vector<std::uint64_t> frontier{best_id};
    while (!frontier.empty()) {
        std::uint64_t id = frontier.back();
        frontier.pop_back();
        if (!closure.insert(id).second) continue;
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw ValidationError("lineage refers to a missing candidate id "
                                  + std::to_string(id));
        for (std::uint64_t p : it->second->parents) frontier.push_back(p);
    }

    std::ostringstream os;
    os << "// schema: qsynth-lineage-v1\n";
    os << "digraph lineage {\n";
    os << "  node [shape=box, fontsize=10];\n";
    for (std::uint64_t id : closure) {
        const Candidate& c = *by_id.at(id);
        os << "  n" << id << " [label=\"#" << id << " " << mutation_name(c.mutation) << " g="
           << c.generation << "\\nf_total=";
        if (c.report.failed) os << "failed";
        else os << c.report.f_total;
        os << "\"";
        if (id == best_id) os << ", style=bold";
        os << "];\n";
    }
    for (std::uint64_t id : closure) {
        const Candidate& c = *by_id.at(id);
        for (std::uint64_t p : c.parents)
            os << "  n" << p << " -> n" << id << " [label=\"" << mutation_name(c.mutation)
               << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// ASCII circuit rendering

/// One column per gate; '@' marks controls, '|' spans intermediate wires.
inline std::string render_ascii(const CircuitIR& circuit) {
    const int n = circuit.n_qubits;
    const std::size_t cols = circuit.gates.size();
    std::vector<std::vector<std::string>> cell(static_cast<std::size_t>(n),
                                               std::vector<std::string>(cols));
    for (std::size_t j = 0; j < cols; ++j) {
        const Gate& g = circuit.gates[j];
        int lo = n, hi = -1;
        for (int q : g.qubits) {
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        auto put = [&](int q, std::string s) { cell[static_cast<std::size_t>(q)][j] = std::move(s); };
        switch (g.unitary.symbol) {
        case UnitaryKind::H: put(g.qubits[0], "H"); break;
        case UnitaryKind::X: put(g.qubits[0], "X"); break;
        case UnitaryKind::Z: put(g.qubits[0], "Z"); break;
        case UnitaryKind::CP:
            put(g.qubits[0], "@");
            put(g.qubits[1], "P" + std::to_string(*g.param_slot));
            break;
        case UnitaryKind::MCX:
            for (std::size_t i = 0; i + 1 < g.qubits.size(); ++i) put(g.qubits[i], "@");
            put(g.qubits.back(), "X");
            break;
        case UnitaryKind::Oracle:
            for (int q : g.qubits) put(q, "O");
            break;
        }
        for (int q = lo + 1; q < hi; ++q)
            if (cell[static_cast<std::size_t>(q)][j].empty()) put(q, "|");
    }

    std::vector<std::size_t> width(cols, 1);
    for (std::size_t j = 0; j < cols; ++j)
        for (int q = 0; q < n; ++q)
            width[j] = std::max(width[j], cell[static_cast<std::size_t>(q)][j].size());

    std::ostringstream os;
    for (int q = 0; q < n; ++q) {
        os << 'q' << q << ": ";
        for (std::size_t j = 0; j < cols; ++j) {
            std::string s = cell[static_cast<std::size_t>(q)][j];
            if (s.empty()) s = "-";
            os << '-' << s << std::string(width[j] - s.size() + 1, '-');
        }
        os << "-\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Run orchestration

struct RunSummary {
    std::string out_dir;
    bool success = false;
    bool timed_out = false;
    std::string stop_reason;
    int generations = 0;
    std::uint64_t evaluations = 0;
    std::uint64_t best_id = 0;
    double best_f_total = 0.0;
    std::string best_program;
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

inline nlohmann::json generation_log_json(const GenerationLog& entry, double space_fraction) {
    nlohmann::json top = nlohmann::json::array();
    for (double f : entry.top_f) top.push_back(f);
    return nlohmann::json{{"schema", "qsynth-log-v1"},
                          {"generation", entry.generation},
                          {"population", entry.population},
                          {"evaluations", entry.evaluations},
                          {"unique_evaluations", entry.unique_evaluations},
                          {"explore_p", entry.explore_p},
                          {"max_f_total", entry.max_f_total},
                          {"best_id", entry.best_id},
                          {"space_fraction", space_fraction},
                          {"top", std::move(top)}};
}

inline RunSummary finalize_run(const ExperimentConfig& cfg, const TaskSpec& task,
                               const SearchResult& result,
                               const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const auto& pop = result.state.population;

    write_text_file(dir / "checkpoint.json", state_to_json(result.state).dump(2) + "\n");

    const Candidate* best = nullptr;
    for (const auto& c : pop)
        if (c.id == result.best_id) best = &c;
    if (!best && !pop.empty()) best = &pop.front();

    int max_motifs = 1;
    for (int c : cfg.hp.init_motif_counts) max_motifs = std::max(max_motifs, c);
    BigInt space = search_space_size(cfg.space, max_motifs);
    double fraction = pop.empty() ? 0.0
                                  : static_cast<double>(static_cast<double>(pop.size())
                                                        / space.convert_to<double>());

    nlohmann::json j;
    j["schema"] = "qsynth-result-v1";
    j["task"] = task.name;
    j["seed"] = cfg.hp.rng_seed;
    j["success"] = result.success_id.has_value();
    j["timed_out"] = result.timed_out;
    j["stop_reason"] = result.stop_reason;
    j["generations"] = result.state.generation;
    j["evaluations"] = pop.size();
    j["unique_evaluations"] = result.state.unique_evaluations;
    j["space"] = {{"config_count", primitive_config_count(cfg.space).str()},
                  {"n_motifs", max_motifs},
                  {"size", space.str()},
                  {"evaluation_fraction", fraction}};
    if (!cfg.train.step_capped) j["elapsed_seconds"] = result.elapsed_seconds;
    if (best) {
        j["best"] = {{"id", best->id},
                     {"generation", best->generation},
                     {"mutation", std::string(mutation_name(best->mutation))},
                     {"program", print_program(best->program)},
                     {"report", report_to_json(best->report)},
                     {"min_pair_score", best->report.failed ? nlohmann::json(nullptr)
                                                            : nlohmann::json(best->report.min_pair_score())}};
    }
    write_text_file(dir / "result.json", j.dump(2) + "\n");

    if (best) {
        write_text_file(dir / "best_program.txt",
                        "// schema: qsynth-program-v1\n" + print_program(best->program));
        write_text_file(dir / "lineage.dot", export_lineage(pop, best->id));
    }

    RunSummary summary;
    summary.out_dir = dir.string();
    summary.success = result.success_id.has_value();
    summary.timed_out = result.timed_out;
    summary.stop_reason = result.stop_reason;
    summary.generations = result.state.generation;
    summary.evaluations = pop.size();
    if (best) {
        summary.best_id = best->id;
        summary.best_f_total = best->report.f_total;
        summary.best_program = print_program(best->program);
    }
    return summary;
}

}  // namespace detail

/// Runs the configured experiment and writes config echo, JSONL fitness
/// log, checkpoints, result summary, best program, and lineage graph into
/// the output directory.
inline RunSummary run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.out_dir.empty()) throw ConfigError("no output directory configured");
    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);

    detail::write_text_file(dir / "config.json", config_to_json(cfg).dump(2) + "\n");

    TaskSpec task = cfg.task();
    int max_motifs = 1;
    for (int c : cfg.hp.init_motif_counts) max_motifs = std::max(max_motifs, c);
    const double space_size_d = search_space_size(cfg.space, max_motifs).convert_to<double>();

    std::ofstream log(dir / "fitness_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) throw ConfigError("cannot write fitness log in " + cfg.out_dir);

    SearchOptions opts;
    opts.jobs = cfg.jobs;
    opts.train = cfg.train;
    opts.weights = cfg.weights;
    opts.checkpoint_interval = cfg.checkpoint_interval;
    opts.on_generation = [&](const GenerationLog& entry) {
        double fraction = static_cast<double>(entry.evaluations) / space_size_d;
        log << detail::generation_log_json(entry, fraction).dump() << "\n";
        log.flush();
    };
    opts.on_checkpoint = [&](const SearchState& state) {
        detail::write_text_file(dir / "checkpoint.json", state_to_json(state).dump(2) + "\n");
    };

    SearchResult result = run_search(task, cfg.space, cfg.hp, opts);
    return detail::finalize_run(cfg, task, result, dir);
}

/// Continues a run from <out_dir>/checkpoint.json using the config echo in
/// the same directory. Log lines past the checkpointed generation are
/// dropped before new lines are appended.
inline RunSummary resume_experiment(const std::string& out_dir,
                                    std::optional<int> jobs_override = std::nullopt) {
    namespace fs = std::filesystem;
    fs::path dir(out_dir);
    ExperimentConfig cfg = load_config_file(dir / "config.json");
    cfg.out_dir = out_dir;
    if (jobs_override) cfg.jobs = *jobs_override;

    std::ifstream ck(dir / "checkpoint.json");
    if (!ck) throw ConfigError("no checkpoint in " + out_dir);
    nlohmann::json jck;
    ck >> jck;
    SearchState state = state_from_json(jck);

    // retain only log lines from generations the checkpoint has seen
    std::vector<std::string> kept;
    {
        std::ifstream in(dir / "fitness_log.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.value("generation", 0) <= state.generation)
                kept.push_back(line);
        }
    }
    {
        std::ofstream out(dir / "fitness_log.jsonl", std::ios::binary | std::ios::trunc);
        for (const auto& line : kept) out << line << "\n";
    }

    TaskSpec task = cfg.task();
    int max_motifs = 1;
    for (int c : cfg.hp.init_motif_counts) max_motifs = std::max(max_motifs, c);
    const double space_size_d = search_space_size(cfg.space, max_motifs).convert_to<double>();

    std::ofstream log(dir / "fitness_log.jsonl", std::ios::binary | std::ios::app);
    SearchOptions opts;
    opts.jobs = cfg.jobs;
    opts.train = cfg.train;
    opts.weights = cfg.weights;
    opts.checkpoint_interval = cfg.checkpoint_interval;
    opts.on_generation = [&](const GenerationLog& entry) {
        double fraction = static_cast<double>(entry.evaluations) / space_size_d;
        log << detail::generation_log_json(entry, fraction).dump() << "\n";
        log.flush();
    };
    opts.on_checkpoint = [&](const SearchState& st) {
        detail::write_text_file(dir / "checkpoint.json", state_to_json(st).dump(2) + "\n");
    };

    SearchResult result = resume_search(std::move(state), task, cfg.space, cfg.hp, opts);
    return detail::finalize_run(cfg, task, result, dir);
}

}  // namespace qsynth
