#pragma once

// Router visualization: one cell per byte, green intensity from the
// normalized weight factor, emphasized cell where the routing mask is set.

#include <cstdint>
#include <string>
#include <vector>

#include "synergy/common.hpp"

namespace synergy::viz {

struct VizRecord {
    std::vector<uint8_t> text_bytes;
    std::vector<double> w;
    std::vector<uint8_t> m;
    std::vector<double> sigma;

    void validate() const {
        if (text_bytes.empty()) throw SynergyError("VizRecord: empty record");
        if (w.size() != text_bytes.size() || m.size() != text_bytes.size() ||
            sigma.size() != text_bytes.size())
            throw SynergyError("VizRecord: sequence lengths differ");
    }
};

enum class VizFormat { html, ansi };

// Self-contained document: inline styles for HTML, background-color escape
// codes for ANSI. Constant-weight records render at 50% intensity.
std::string render_routing(const VizRecord& record, VizFormat format);

}  // namespace synergy::viz
