#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lesioneval {

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument or configuration value.
class parameter_error : public error {
public:
    using error::error;
};

/// Two objects that must share a voxel grid do not.
class geometry_error : public error {
public:
    using error::error;
};

/// Input content is unusable (missing file referenced by a manifest,
/// no body found in a PET volume, malformed cohort data).
class data_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

enum class Unit { SUV, HU, BqPerMl, Normalized };

inline const char* unit_name(Unit u) {
    switch (u) {
        case Unit::SUV: return "SUV";
        case Unit::HU: return "HU";
        case Unit::BqPerMl: return "Bq/ml";
        case Unit::Normalized: return "normalized";
    }
    return "?";
}

/// Physical voxel size in millimeters, strictly positive per axis.
struct Spacing {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    Spacing() = default;
    Spacing(double dx_, double dy_, double dz_) : dx(dx_), dy(dy_), dz(dz_) {
        if (!(dx > 0.0 && dy > 0.0 && dz > 0.0) || !std::isfinite(dx) ||
            !std::isfinite(dy) || !std::isfinite(dz))
            throw parameter_error("spacing components must be finite and strictly positive");
    }

    double voxel_volume_ml() const { return dx * dy * dz / 1000.0; }

    bool operator==(const Spacing&) const = default;
};

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool valid() const { return nx > 0 && ny > 0 && nz > 0; }
    bool operator==(const Dims&) const = default;
};

inline std::size_t linear_index(const Dims& d, int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(d.nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(z));
}

inline std::array<int, 3> unravel_index(const Dims& d, std::size_t idx) {
    const int x = static_cast<int>(idx % static_cast<std::size_t>(d.nx));
    idx /= static_cast<std::size_t>(d.nx);
    const int y = static_cast<int>(idx % static_cast<std::size_t>(d.ny));
    const int z = static_cast<int>(idx / static_cast<std::size_t>(d.ny));
    return {x, y, z};
}

namespace detail {

inline void require_dims(const Dims& d) {
    if (!d.valid()) throw parameter_error("volume dimensions must be positive");
}

inline std::string dims_str(const Dims& d) {
    return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

} // namespace detail

/// 3D grid of scalar samples (x fastest, then y, then z) with physical
/// spacing and a value unit. Immutable after construction; all samples
/// are checked finite.
class ScalarVolume {
public:
    ScalarVolume(Dims dims, Spacing spacing, Unit unit, std::vector<float> data,
                 bool from_mask = false)
        : dims_(dims), spacing_(spacing), unit_(unit), data_(std::move(data)),
          from_mask_(from_mask) {
        detail::require_dims(dims_);
        if (data_.size() != dims_.size())
            throw parameter_error("data length " + std::to_string(data_.size()) +
                                  " does not match dims " + detail::dims_str(dims_));
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i]))
                throw data_error("non-finite sample at voxel index " + std::to_string(i));
        }
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    Unit unit() const { return unit_; }
    const std::vector<float>& data() const { return data_; }
    bool from_mask() const { return from_mask_; }

    float at(int x, int y, int z) const { return data_[linear_index(dims_, x, y, z)]; }
    float operator[](std::size_t i) const { return data_[i]; }
    std::size_t size() const { return data_.size(); }

private:
    Dims dims_;
    Spacing spacing_;
    Unit unit_;
    std::vector<float> data_;
    bool from_mask_;
};

/// Foreground/background grid sharing the ScalarVolume geometry.
/// Stored one byte per voxel; any nonzero input byte becomes 1.
class BinaryMask {
public:
    BinaryMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> data)
        : dims_(dims), spacing_(spacing), data_(std::move(data)) {
        detail::require_dims(dims_);
        if (data_.size() != dims_.size())
            throw parameter_error("mask length " + std::to_string(data_.size()) +
                                  " does not match dims " + detail::dims_str(dims_));
        for (auto& v : data_)
            if (v > 1) v = 1;
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

    bool at(int x, int y, int z) const { return data_[linear_index(dims_, x, y, z)] != 0; }
    bool operator[](std::size_t i) const { return data_[i] != 0; }
    std::size_t size() const { return data_.size(); }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : data_) n += v;
        return n;
    }

    bool same_geometry(const BinaryMask& o) const {
        return dims_ == o.dims_ && spacing_ == o.spacing_;
    }
    bool same_geometry(const ScalarVolume& o) const {
        return dims_ == o.dims() && spacing_ == o.spacing();
    }

private:
    Dims dims_;
    Spacing spacing_;
    std::vector<std::uint8_t> data_;
};

inline void require_same_geometry(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!a.same_geometry(b))
        throw geometry_error(std::string(what) + ": masks do not share dims/spacing");
}

inline void require_same_geometry(const BinaryMask& a, const ScalarVolume& b, const char* what) {
    if (!a.same_geometry(b))
        throw geometry_error(std::string(what) + ": mask and volume do not share dims/spacing");
}

/// Connected foreground components. labels[i] is 0 for background or the
/// 1-based component id; components are numbered by ascending smallest
/// linear voxel index and voxels[l-1] lists each component's linear
/// indices in ascending order.
struct LabeledComponents {
    Dims dims;
    Spacing spacing;
    std::vector<std::int32_t> labels;
    int count = 0;
    std::vector<std::vector<std::size_t>> voxels;

    bool same_geometry(const LabeledComponents& o) const {
        return dims == o.dims && spacing == o.spacing;
    }
    bool same_geometry(const BinaryMask& o) const {
        return dims == o.dims() && spacing == o.spacing();
    }
    std::size_t component_size(int label) const {
        return voxels.at(static_cast<std::size_t>(label) - 1).size();
    }
};

/// Axis-aligned voxel box, both corners inclusive.
struct VoxelBox {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};

    bool contains(int x, int y, int z) const {
        return x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1] && z >= lo[2] && z <= hi[2];
    }
    bool operator==(const VoxelBox&) const = default;
};

/// Decay-corrected body-weight SUV conversion inputs.
struct SuvConversionParams {
    double injected_dose_bq = 0.0;
    double body_weight_g = 0.0;
    double delay_min = 0.0;
    double half_life_min = 109.77; // F-18

    void validate() const {
        if (!(injected_dose_bq > 0.0) || !(body_weight_g > 0.0) || !(half_life_min > 0.0) ||
            !(delay_min >= 0.0))
            throw parameter_error("SUV conversion parameters must be strictly positive");
    }
};

} // namespace lesioneval
