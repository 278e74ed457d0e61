#include "superloc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace superloc {

ConfigError::ConfigError(const std::string& field, const std::string& message, int line)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + field + ": " + message),
      field_(field), line_(line)
{
}

namespace {

int line_of(const YAML::Node& n)
{
    const YAML::Mark m = n.Mark();
    return m.is_null() ? 0 : m.line + 1;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// A mapping whose keys are consumed one by one; leftovers are unknown keys.
class Section
{
public:
    Section(YAML::Node node, std::string path) : path_(std::move(path))
    {
        if (!node.IsDefined() || node.IsNull())
            return;
        if (!node.IsMap())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected a mapping", line_of(node));
        node_ = node;
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node take(const std::string& key)
    {
        seen_.insert(key);
        if (!node_.IsDefined() || !node_.IsMap())
            return YAML::Node(YAML::NodeType::Undefined);
        const YAML::Node& n = node_;
        return n[key];
    }

    Section child(const std::string& key) { return {take(key), field(key)}; }

    template <typename T>
    void read(const std::string& key, T& target)
    {
        const YAML::Node n = take(key);
        if (!n || n.IsNull())
            return;
        if (!n.IsScalar())
            throw ConfigError(field(key), "expected a scalar", line_of(n));
        try {
            target = n.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(field(key), "cannot parse '" + n.Scalar() + "'", line_of(n));
        }
    }

    void read_real(const std::string& key, double& target)
    {
        const YAML::Node n = take(key);
        if (!n || n.IsNull())
            return;
        target = real_value(n, field(key));
    }

    template <typename E, typename F>
    void read_enum(const std::string& key, E& target, F parse)
    {
        const YAML::Node n = take(key);
        if (!n || n.IsNull())
            return;
        if (!n.IsScalar())
            throw ConfigError(field(key), "expected a scalar", line_of(n));
        try {
            target = parse(lower(n.Scalar()));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field(key), e.what(), line_of(n));
        }
    }

    void finish() const
    {
        if (!node_.IsDefined() || !node_.IsMap())
            return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key))
                throw ConfigError(field(key), "unknown key", line_of(kv.first));
        }
    }

    static double real_value(const YAML::Node& n, const std::string& field)
    {
        if (!n.IsScalar())
            throw ConfigError(field, "expected a number", line_of(n));
        const std::string s = lower(n.Scalar());
        if (s == "inf" || s == "+inf" || s == ".inf" || s == "+.inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf" || s == "-.inf")
            return -std::numeric_limits<double>::infinity();
        try {
            return n.as<double>();
        } catch (const YAML::Exception&) {
            throw ConfigError(field, "cannot parse '" + n.Scalar() + "' as a number", line_of(n));
        }
    }

    [[nodiscard]] const YAML::Node& node() const { return node_; }

private:
    YAML::Node node_{YAML::NodeType::Undefined};
    std::string path_;
    std::set<std::string> seen_;
};

Location km_point(const YAML::Node& n, const std::string& field)
{
    if (!n.IsSequence() || n.size() != 2)
        throw ConfigError(field, "expected [x, y] in km", line_of(n));
    return {1000.0 * Section::real_value(n[0], field), 1000.0 * Section::real_value(n[1], field)};
}

PilotKind parse_pilots(const std::string& s)
{
    if (s == "ones")
        return PilotKind::Ones;
    if (s == "qpsk")
        return PilotKind::Qpsk;
    throw std::invalid_argument("expected ones or qpsk, got '" + s + "'");
}

MobileCoupling parse_coupling(const std::string& s)
{
    if (s == "shared")
        return MobileCoupling::Shared;
    if (s == "per_atom")
        return MobileCoupling::PerAtom;
    throw std::invalid_argument("expected shared or per_atom, got '" + s + "'");
}

GainModel parse_gains(const std::string& s)
{
    if (s == "random_phase")
        return GainModel::RandomPhase;
    if (s == "unit")
        return GainModel::Unit;
    throw std::invalid_argument("expected random_phase or unit, got '" + s + "'");
}

OutputFormat parse_format(const std::string& s)
{
    if (s == "csv")
        return OutputFormat::Csv;
    if (s == "json")
        return OutputFormat::Json;
    throw std::invalid_argument("expected csv or json, got '" + s + "'");
}

void read_system(Section sec, RunConfig& cfg)
{
    SystemConfig& sys = cfg.system;
    sec.read("num_antennas", sys.num_antennas);
    sec.read("num_subcarriers", sys.num_subcarriers);
    sec.read_real("subcarrier_spacing_hz", sys.subcarrier_spacing);
    sec.read_real("carrier_freq_hz", sys.carrier_freq);
    sec.read_real("element_spacing_m", sys.element_spacing);
    sec.read_real("speed_of_light", sys.speed_of_light);
    const YAML::Node bs = sec.take("bs_positions_km");
    if (bs && !bs.IsNull()) {
        if (!bs.IsSequence())
            throw ConfigError(sec.field("bs_positions_km"), "expected a list of [x, y]", line_of(bs));
        sys.bs_positions.clear();
        for (const auto& p : bs)
            sys.bs_positions.push_back(km_point(p, sec.field("bs_positions_km")));
    }
    sec.read_enum("pilots", cfg.pilots, parse_pilots);
    sec.read("pilot_seed", cfg.pilot_seed);
    sec.finish();
    sys.symbols = make_pilots(cfg.pilots, std::max(sys.num_subcarriers, 0), cfg.pilot_seed);
}

void read_solver(Section sec, SolverConfig& s)
{
    sec.read("auto_lambda", s.auto_lambda);
    sec.read_real("lambda_scale", s.lambda_scale);
    sec.read_real("lambda1", s.lambda1);
    sec.read_real("lambda2", s.lambda2);
    {
        const YAML::Node n = sec.take("noiseless_snr_db");
        if (n && n.IsNull())
            s.noiseless_snr_db.reset();
        else if (n)
            s.noiseless_snr_db = Section::real_value(n, sec.field("noiseless_snr_db"));
    }
    sec.read_real("prune_threshold", s.prune_threshold);
    sec.read("max_outer_iters", s.max_outer_iters);
    sec.read_real("stop_tol", s.stop_tol);
    sec.read("coarse_grid_points_per_axis", s.coarse_grid_points_per_axis);
    sec.read("scatter_grid_points_per_axis", s.scatter_grid_points_per_axis);
    sec.read("mobile_grid_points_per_axis", s.mobile_grid_points_per_axis);
    sec.read("refine_starts", s.refine_starts);
    sec.read_real("bs_exclusion_radius_m", s.bs_exclusion_radius);
    sec.read_enum("coupling", s.coupling, parse_coupling);
    sec.read("debias", s.debias);
    sec.read_real("debias_keep_ratio", s.debias_keep_ratio);

    Section ld = sec.child("local_descent");
    ld.read("max_steps", s.local_descent.max_steps);
    ld.read_real("step_init_m", s.local_descent.step_init);
    ld.read_real("armijo_c", s.local_descent.armijo_c);
    ld.read_real("tol_m", s.local_descent.tol);
    ld.read_real("collapse_radius_m", s.local_descent.collapse_radius);
    ld.finish();

    Section ws = sec.child("weight_solver");
    ws.read("max_iters", s.weight_solver.max_iters);
    ws.read_real("tol", s.weight_solver.tol);
    ws.finish();
    sec.finish();
}

void read_experiment(Section sec, RunConfig& cfg)
{
    ExperimentConfig& e = cfg.experiment;
    sec.read_enum("condition", e.condition, [](const std::string& s) { return parse_condition(s); });
    const YAML::Node grid = sec.take("snr_grid_db");
    if (grid && !grid.IsNull()) {
        if (!grid.IsSequence())
            throw ConfigError(sec.field("snr_grid_db"), "expected a list of dB values", line_of(grid));
        e.snr_grid_db.clear();
        for (const auto& v : grid)
            e.snr_grid_db.push_back(Section::real_value(v, sec.field("snr_grid_db")));
    }
    sec.read("trials", e.trials);
    sec.read("seed", e.seed);
    sec.read("num_scatterers", e.num_scatterers);
    sec.read_enum("gains", e.gains, parse_gains);
    sec.read_real("bs_clearance_m", e.scenario.bs_clearance);
    sec.read_real("min_separation_m", e.scenario.min_separation);
    sec.read("max_placement_attempts", e.scenario.max_attempts);
    sec.read("threads", e.threads);
    sec.read("record_timing", e.record_timing);

    Section scene = sec.child("scene_km");
    const YAML::Node lo = scene.take("min");
    const YAML::Node hi = scene.take("max");
    if (lo && !lo.IsNull())
        cfg.solver.scene.min = km_point(lo, scene.field("min"));
    if (hi && !hi.IsNull())
        cfg.solver.scene.max = km_point(hi, scene.field("max"));
    scene.finish();
    sec.finish();
}

void read_output(Section sec, OutputConfig& o)
{
    sec.read("path", o.path);
    sec.read_enum("format", o.format, parse_format);
    sec.finish();
}

} // namespace

void RunConfig::validate() const
{
    try {
        system.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("system", e.what());
    }
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("solver", e.what());
    }
    const ExperimentConfig& e = experiment;
    if (e.trials < 1)
        throw ConfigError("experiment.trials", "must be >= 1");
    if (e.snr_grid_db.empty())
        throw ConfigError("experiment.snr_grid_db", "must list at least one SNR");
    for (double s : e.snr_grid_db)
        if (std::isnan(s) || s == -std::numeric_limits<double>::infinity())
            throw ConfigError("experiment.snr_grid_db", "values must be finite dB or inf");
    if (e.num_scatterers < 0)
        throw ConfigError("experiment.num_scatterers", "must be >= 0 (0 selects the default)");
    if (e.threads < 1)
        throw ConfigError("experiment.threads", "must be >= 1");
    if (!(e.scenario.bs_clearance >= 0.0))
        throw ConfigError("experiment.bs_clearance_m", "must be >= 0");
    if (!(e.scenario.min_separation >= 0.0))
        throw ConfigError("experiment.min_separation_m", "must be >= 0");
    if (e.scenario.max_attempts < 1)
        throw ConfigError("experiment.max_placement_attempts", "must be >= 1");
    if (output.path.empty())
        throw ConfigError("output.path", "must not be empty");
}

MonteCarloOptions RunConfig::monte_carlo_options() const
{
    MonteCarloOptions o;
    o.num_scatterers = experiment.num_scatterers;
    o.gains = experiment.gains;
    o.scenario = experiment.scenario;
    o.threads = experiment.threads;
    o.record_timing = experiment.record_timing;
    return o;
}

RunConfig parse_run_config(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("<yaml>", e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
    }
    if (!root || root.IsNull())
        throw ConfigError("<root>", "empty configuration");
    Section top(root, "");
    int version = 0;
    top.read("schema_version", version);
    if (version != kConfigSchemaVersion)
        throw ConfigError("schema_version", "expected " + std::to_string(kConfigSchemaVersion) + ", got " +
                                                std::to_string(version), line_of(root["schema_version"]));

    RunConfig cfg;
    read_system(top.child("system"), cfg);
    read_solver(top.child("solver"), cfg.solver);
    read_experiment(top.child("experiment"), cfg);
    read_output(top.child("output"), cfg.output);
    top.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("<file>", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

namespace {

std::string pilots_name(PilotKind k) { return k == PilotKind::Qpsk ? "qpsk" : "ones"; }
std::string coupling_name(MobileCoupling c) { return c == MobileCoupling::PerAtom ? "per_atom" : "shared"; }
std::string gains_name(GainModel g) { return g == GainModel::Unit ? "unit" : "random_phase"; }
std::string format_name(OutputFormat f) { return f == OutputFormat::Json ? "json" : "csv"; }

void emit_real(YAML::Emitter& out, double v)
{
    if (std::isinf(v))
        out << (v > 0 ? "inf" : "-inf");
    else
        out << v;
}

void emit_km(YAML::Emitter& out, Location p)
{
    out << YAML::Flow << YAML::BeginSeq;
    emit_real(out, p.x / 1000.0);
    emit_real(out, p.y / 1000.0);
    out << YAML::EndSeq;
}

} // namespace

std::string dump_run_config(const RunConfig& cfg)
{
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    const SystemConfig& sys = cfg.system;
    const SolverConfig& s = cfg.solver;
    const ExperimentConfig& e = cfg.experiment;

    out << YAML::BeginMap;
    out << YAML::Key << "schema_version" << YAML::Value << kConfigSchemaVersion;

    out << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "num_antennas" << YAML::Value << sys.num_antennas;
    out << YAML::Key << "num_subcarriers" << YAML::Value << sys.num_subcarriers;
    out << YAML::Key << "subcarrier_spacing_hz" << YAML::Value << sys.subcarrier_spacing;
    out << YAML::Key << "carrier_freq_hz" << YAML::Value << sys.carrier_freq;
    out << YAML::Key << "element_spacing_m" << YAML::Value << sys.element_spacing;
    out << YAML::Key << "speed_of_light" << YAML::Value << sys.speed_of_light;
    out << YAML::Key << "bs_positions_km" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : sys.bs_positions)
        emit_km(out, p);
    out << YAML::EndSeq;
    out << YAML::Key << "pilots" << YAML::Value << pilots_name(cfg.pilots);
    out << YAML::Key << "pilot_seed" << YAML::Value << cfg.pilot_seed;
    out << YAML::EndMap;

    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "auto_lambda" << YAML::Value << s.auto_lambda;
    out << YAML::Key << "lambda_scale" << YAML::Value << s.lambda_scale;
    out << YAML::Key << "lambda1" << YAML::Value << s.lambda1;
    out << YAML::Key << "lambda2" << YAML::Value << s.lambda2;
    out << YAML::Key << "noiseless_snr_db" << YAML::Value;
    if (s.noiseless_snr_db)
        out << *s.noiseless_snr_db;
    else
        out << YAML::Null;
    out << YAML::Key << "prune_threshold" << YAML::Value << s.prune_threshold;
    out << YAML::Key << "max_outer_iters" << YAML::Value << s.max_outer_iters;
    out << YAML::Key << "stop_tol" << YAML::Value << s.stop_tol;
    out << YAML::Key << "coarse_grid_points_per_axis" << YAML::Value << s.coarse_grid_points_per_axis;
    out << YAML::Key << "scatter_grid_points_per_axis" << YAML::Value << s.scatter_grid_points_per_axis;
    out << YAML::Key << "mobile_grid_points_per_axis" << YAML::Value << s.mobile_grid_points_per_axis;
    out << YAML::Key << "refine_starts" << YAML::Value << s.refine_starts;
    out << YAML::Key << "bs_exclusion_radius_m" << YAML::Value << s.bs_exclusion_radius;
    out << YAML::Key << "coupling" << YAML::Value << coupling_name(s.coupling);
    out << YAML::Key << "debias" << YAML::Value << s.debias;
    out << YAML::Key << "debias_keep_ratio" << YAML::Value << s.debias_keep_ratio;
    out << YAML::Key << "local_descent" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "max_steps" << YAML::Value << s.local_descent.max_steps;
    out << YAML::Key << "step_init_m" << YAML::Value << s.local_descent.step_init;
    out << YAML::Key << "armijo_c" << YAML::Value << s.local_descent.armijo_c;
    out << YAML::Key << "tol_m" << YAML::Value << s.local_descent.tol;
    out << YAML::Key << "collapse_radius_m" << YAML::Value << s.local_descent.collapse_radius;
    out << YAML::EndMap;
    out << YAML::Key << "weight_solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "max_iters" << YAML::Value << s.weight_solver.max_iters;
    out << YAML::Key << "tol" << YAML::Value << s.weight_solver.tol;
    out << YAML::EndMap;
    out << YAML::EndMap;

    out << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "condition" << YAML::Value << lower(to_string(e.condition));
    out << YAML::Key << "snr_grid_db" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : e.snr_grid_db)
        emit_real(out, v);
    out << YAML::EndSeq;
    out << YAML::Key << "trials" << YAML::Value << e.trials;
    out << YAML::Key << "seed" << YAML::Value << e.seed;
    out << YAML::Key << "num_scatterers" << YAML::Value << e.num_scatterers;
    out << YAML::Key << "gains" << YAML::Value << gains_name(e.gains);
    out << YAML::Key << "bs_clearance_m" << YAML::Value << e.scenario.bs_clearance;
    out << YAML::Key << "min_separation_m" << YAML::Value << e.scenario.min_separation;
    out << YAML::Key << "max_placement_attempts" << YAML::Value << e.scenario.max_attempts;
    out << YAML::Key << "threads" << YAML::Value << e.threads;
    out << YAML::Key << "record_timing" << YAML::Value << e.record_timing;
    out << YAML::Key << "scene_km" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "min" << YAML::Value;
    emit_km(out, s.scene.min);
    out << YAML::Key << "max" << YAML::Value;
    emit_km(out, s.scene.max);
    out << YAML::EndMap;
    out << YAML::EndMap;

    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "path" << YAML::Value << cfg.output.path;
    out << YAML::Key << "format" << YAML::Value << format_name(cfg.output.format);
    out << YAML::EndMap;

    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace superloc
