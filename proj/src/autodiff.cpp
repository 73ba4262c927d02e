#include "uareg/autodiff.hpp"

#include <sstream>

namespace uareg::ad {

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

} // namespace uareg::ad
