#pragma once

#include <array>

namespace gendx {

/// Binary diagnosis label: 0 = control, 1 = patient.
class ClassLabel {
public:
    static ClassLabel control() { return ClassLabel(0); }
    static ClassLabel patient() { return ClassLabel(1); }

    /// Validates that v is 0 or 1.
    static ClassLabel from_int(int v);

    int value() const { return value_; }
    bool is_patient() const { return value_ == 1; }
    ClassLabel flipped() const { return ClassLabel(1 - value_); }
    std::array<double, 2> one_hot() const {
        return value_ == 0 ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
    }

    friend bool operator==(ClassLabel a, ClassLabel b) { return a.value_ == b.value_; }
    friend bool operator!=(ClassLabel a, ClassLabel b) { return a.value_ != b.value_; }

private:
    explicit ClassLabel(int v) : value_(v) {}
    int value_;
};

}  // namespace gendx
