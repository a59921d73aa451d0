// SPDX-License-Identifier: Apache-2.0
#include "splatlift/image.hpp"

namespace splatlift {

std::string semantics_name(ImageSemantics s) {
    switch (s) {
        case ImageSemantics::Color: return "color";
        case ImageSemantics::Depth: return "depth";
        case ImageSemantics::Mask: return "mask";
        case ImageSemantics::Alpha: return "alpha";
    }
    return "unknown";
}

} // namespace splatlift
