#pragma once

#include "bounds.hpp"
#include "conjugacy.hpp"
#include "cutoff.hpp"
#include "error.hpp"
#include "interval.hpp"
#include "jet.hpp"
#include "matrix.hpp"
#include "oracle.hpp"
#include "rational.hpp"
#include "rdt.hpp"
#include "splitting.hpp"
#include "upoly.hpp"

namespace cmcert {

inline constexpr const char* version = "0.1.0";

/// Module name and version pairs recorded in every output header.
inline std::vector<std::pair<std::string, std::string>> module_versions() {
    return {{"polyalg", version}, {"splitting", version}, {"conjugacy", version}, {"bounds", version},
            {"cutoff", version},  {"rdt_app", version},   {"oracle", version}};
}

}  // namespace cmcert
