#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "apcr/bytes.hpp"

namespace testsupport {

/// Loads a `name value` per-line fixture file from tests/fixtures.
inline std::map<std::string, std::string> loadFixture(const std::string& file) {
    std::ifstream in(std::string(APCR_FIXTURE_DIR) + "/" + file);
    if (!in) throw std::runtime_error("missing fixture: " + file);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string name, value;
        fields >> name >> value;
        out[name] = value;
    }
    return out;
}

inline apcr::Bytes fixtureBytes(const std::map<std::string, std::string>& fx,
                                const std::string& name) {
    auto it = fx.find(name);
    if (it == fx.end()) throw std::runtime_error("missing vector: " + name);
    return apcr::from_hex(it->second);
}

} // namespace testsupport
