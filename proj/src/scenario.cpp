#include "superloc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace superloc {

std::string to_string(Condition c)
{
    switch (c) {
    case Condition::LoS: return "los";
    case Condition::OLoS: return "olos";
    case Condition::NLoS: return "nlos";
    case Condition::Mixed: return "mixed";
    }
    return "unknown";
}

Condition parse_condition(const std::string& s)
{
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "los") return Condition::LoS;
    if (lower == "olos") return Condition::OLoS;
    if (lower == "nlos") return Condition::NLoS;
    if (lower == "mixed") return Condition::Mixed;
    throw std::invalid_argument("unknown condition '" + s + "' (expected los, olos, nlos or mixed)");
}

std::vector<Location> truth_scatterers(const Scenario& scenario)
{
    std::vector<Location> out;
    for (const auto& paths : scenario.per_bs_paths)
        for (const auto& p : paths) {
            const Location s = canonicalise_virtual_scatter({scenario.mobile, p.scatter});
            if (std::find(out.begin(), out.end(), s) == out.end())
                out.push_back(s);
        }
    return out;
}

} // namespace superloc
