#pragma once

#include <string>

namespace ibnet {

/// Identity carried through every artifact derived from one recording.
struct RecordMeta {
    std::string dyad_id;
    std::string condition_id;
    std::string chromophore; // "HBO" or "HBR"
    int label = 0;           // 1 = ASD-like, 0 = control
};

/// Period interval in seconds, inclusive bounds, lo_s < hi_s.
struct Band {
    double lo_s = 5.0;
    double hi_s = 20.0;
};

} // namespace ibnet
