#include "gendx/label.hpp"

#include <stdexcept>
#include <string>

namespace gendx {

ClassLabel ClassLabel::from_int(int v) {
    if (v != 0 && v != 1) {
        throw std::invalid_argument("ClassLabel: value must be 0 (control) or 1 (patient), got " +
                                    std::to_string(v));
    }
    return ClassLabel(v);
}

}  // namespace gendx
