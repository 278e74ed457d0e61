#include "superloc/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace superloc {

using nlohmann::json;

namespace {

json point(Location p) { return json::array({p.x, p.y}); }
json complex_value(cplx z) { return json::array({z.real(), z.imag()}); }

Location read_point(const json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw SchemaError(field + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

cplx read_complex(const json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw SchemaError(field + ": expected [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

const json& member(const json& j, const char* key, const std::string& where)
{
    if (!j.is_object() || !j.contains(key))
        throw SchemaError(where + ": missing '" + key + "'");
    return j.at(key);
}

} // namespace

std::string dump_dataset(const Dataset& dataset)
{
    const SystemConfig& sys = dataset.system;
    json system = {
        {"num_antennas", sys.num_antennas},
        {"num_subcarriers", sys.num_subcarriers},
        {"subcarrier_spacing_hz", sys.subcarrier_spacing},
        {"carrier_freq_hz", sys.carrier_freq},
        {"element_spacing_m", sys.element_spacing},
        {"speed_of_light", sys.speed_of_light},
    };
    json bs = json::array();
    for (const auto& p : sys.bs_positions)
        bs.push_back(point(p));
    system["bs_positions_m"] = bs;
    json pilots = json::array();
    for (Eigen::Index n = 0; n < sys.symbols.size(); ++n)
        pilots.push_back(complex_value(sys.symbols(n)));
    system["pilots"] = pilots;

    const MeasurementSet& m = dataset.measurements;
    json per_bs = json::array();
    for (const auto& y : m.per_bs) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < y.cols(); ++c)
                row.push_back(complex_value(y(r, c)));
            rows.push_back(row);
        }
        per_bs.push_back(rows);
    }
    json meas = {
        {"snr_db", m.snr_db ? json(*m.snr_db) : json(nullptr)},
        {"noise_seed", m.noise_seed ? json(*m.noise_seed) : json(nullptr)},
        {"per_bs", per_bs},
    };

    json root = {{"schema_version", kDatasetSchemaVersion}, {"system", system}, {"measurements", meas}};
    if (dataset.truth) {
        const Scenario& sc = *dataset.truth;
        json paths = json::array();
        for (const auto& bs_paths : sc.per_bs_paths) {
            json list = json::array();
            for (const auto& p : bs_paths)
                list.push_back({{"scatter_m", p.scatter ? point(*p.scatter) : json(nullptr)},
                                {"gain", complex_value(p.gain)}});
            paths.push_back(list);
        }
        root["ground_truth"] = {
            {"condition", to_string(sc.condition)},
            {"seed", sc.seed},
            {"mobile_m", point(sc.mobile)},
            {"paths", paths},
        };
    }
    return root.dump(1) + "\n";
}

Dataset parse_dataset(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("not valid JSON: ") + e.what());
    }

    try {
        const json& version = member(root, "schema_version", "dataset");
        if (!version.is_number_integer() || version.get<int>() != kDatasetSchemaVersion)
            throw SchemaError("schema_version: expected " + std::to_string(kDatasetSchemaVersion));

        Dataset out;
        const json& sys = member(root, "system", "dataset");
        SystemConfig& cfg = out.system;
        cfg.num_antennas = member(sys, "num_antennas", "system").get<int>();
        cfg.num_subcarriers = member(sys, "num_subcarriers", "system").get<int>();
        cfg.subcarrier_spacing = member(sys, "subcarrier_spacing_hz", "system").get<double>();
        cfg.carrier_freq = member(sys, "carrier_freq_hz", "system").get<double>();
        cfg.element_spacing = member(sys, "element_spacing_m", "system").get<double>();
        cfg.speed_of_light = member(sys, "speed_of_light", "system").get<double>();
        cfg.bs_positions.clear();
        for (const auto& p : member(sys, "bs_positions_m", "system"))
            cfg.bs_positions.push_back(read_point(p, "system.bs_positions_m"));
        const json& pilots = member(sys, "pilots", "system");
        if (!pilots.is_array())
            throw SchemaError("system.pilots: expected a list");
        cfg.symbols.resize(static_cast<Eigen::Index>(pilots.size()));
        for (std::size_t n = 0; n < pilots.size(); ++n)
            cfg.symbols(static_cast<Eigen::Index>(n)) = read_complex(pilots[n], "system.pilots");
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw SchemaError(std::string("system: ") + e.what());
        }

        const json& meas = member(root, "measurements", "dataset");
        const json& snr = member(meas, "snr_db", "measurements");
        if (!snr.is_null())
            out.measurements.snr_db = snr.get<double>();
        const json& noise_seed = member(meas, "noise_seed", "measurements");
        if (!noise_seed.is_null())
            out.measurements.noise_seed = noise_seed.get<std::uint64_t>();
        const json& per_bs = member(meas, "per_bs", "measurements");
        if (!per_bs.is_array() || per_bs.size() != cfg.bs_positions.size())
            throw SchemaError("measurements.per_bs: expected one matrix per base station");
        for (const auto& rows : per_bs) {
            if (!rows.is_array() || rows.size() != static_cast<std::size_t>(cfg.num_antennas))
                throw SchemaError("measurements.per_bs: expected num_antennas rows");
            CMatrix y(cfg.num_antennas, cfg.num_subcarriers);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!rows[r].is_array() || rows[r].size() != static_cast<std::size_t>(cfg.num_subcarriers))
                    throw SchemaError("measurements.per_bs: expected num_subcarriers columns");
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        read_complex(rows[r][c], "measurements.per_bs");
            }
            out.measurements.per_bs.push_back(std::move(y));
        }

        if (root.contains("ground_truth") && !root["ground_truth"].is_null()) {
            const json& gt = root["ground_truth"];
            Scenario sc;
            try {
                sc.condition = parse_condition(member(gt, "condition", "ground_truth").get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw SchemaError(std::string("ground_truth.condition: ") + e.what());
            }
            sc.seed = member(gt, "seed", "ground_truth").get<std::uint64_t>();
            sc.mobile = read_point(member(gt, "mobile_m", "ground_truth"), "ground_truth.mobile_m");
            const json& paths = member(gt, "paths", "ground_truth");
            if (!paths.is_array() || paths.size() != cfg.bs_positions.size())
                throw SchemaError("ground_truth.paths: expected one list per base station");
            for (const auto& list : paths) {
                std::vector<Path> bs_paths;
                for (const auto& p : list) {
                    Path path;
                    const json& s = member(p, "scatter_m", "ground_truth.paths");
                    if (!s.is_null())
                        path.scatter = read_point(s, "ground_truth.paths.scatter_m");
                    path.gain = read_complex(member(p, "gain", "ground_truth.paths"), "ground_truth.paths.gain");
                    bs_paths.push_back(path);
                }
                sc.per_bs_paths.push_back(std::move(bs_paths));
            }
            out.truth = std::move(sc);
        }
        return out;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed dataset: ") + e.what());
    }
}

void write_dataset(const Dataset& dataset, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path + " for writing");
    out << dump_dataset(dataset);
    if (!out)
        throw IoError("failed writing " + path);
}

Dataset read_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str());
}

} // namespace superloc
