#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "superloc/scenario.hpp"
#include "superloc/signal.hpp"

namespace superloc {

inline constexpr int kDatasetSchemaVersion = 1;

/// Dataset or result file that does not match the documented layout.
class SchemaError : public std::runtime_error
{
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error
{
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Measurements together with the system that produced them and, for
/// synthetic data, the ground truth.
struct Dataset
{
    SystemConfig system;
    MeasurementSet measurements;
    std::optional<Scenario> truth;
};

/// JSON text; complex numbers are [re, im] pairs printed to round-trip exactly.
std::string dump_dataset(const Dataset& dataset);

Dataset parse_dataset(const std::string& text);

void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

} // namespace superloc
