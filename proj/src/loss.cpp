#include "uareg/loss.hpp"

namespace uareg {

const char* logits_kind_name(LogitsKind kind) {
    switch (kind) {
        case LogitsKind::raw: return "raw";
        case LogitsKind::noisy: return "noisy";
        case LogitsKind::mixed: return "mixed";
    }
    return "unknown";
}

} // namespace uareg
