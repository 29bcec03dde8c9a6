#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <zlib.h>

#include "lesioneval/core.hpp"

namespace lesioneval {

enum class DataKind : short { U8 = 2, I16 = 4, I32 = 8, F32 = 16, F64 = 64 };

/// Parsed NIfTI-1 header fields the pipeline cares about. `orientation` is
/// the voxel-to-world affine, row major, in millimeters.
struct VolumeFileHeader {
    Dims dims;
    Spacing spacing;
    DataKind data_kind = DataKind::F32;
    double scale_slope = 1.0;
    double scale_intercept = 0.0;
    std::array<std::array<double, 4>, 3> orientation{};
};

namespace nifti_detail {

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration, toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348 bytes");

template <typename T>
inline void byteswap(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
}

inline void swap_header(Nifti1Header& h) {
    byteswap(h.sizeof_hdr);
    byteswap(h.extents);
    byteswap(h.session_error);
    for (auto& d : h.dim) byteswap(d);
    byteswap(h.intent_p1);
    byteswap(h.intent_p2);
    byteswap(h.intent_p3);
    byteswap(h.intent_code);
    byteswap(h.datatype);
    byteswap(h.bitpix);
    byteswap(h.slice_start);
    for (auto& d : h.pixdim) byteswap(d);
    byteswap(h.vox_offset);
    byteswap(h.scl_slope);
    byteswap(h.scl_inter);
    byteswap(h.slice_end);
    byteswap(h.cal_max);
    byteswap(h.cal_min);
    byteswap(h.slice_duration);
    byteswap(h.toffset);
    byteswap(h.glmax);
    byteswap(h.glmin);
    byteswap(h.qform_code);
    byteswap(h.sform_code);
    byteswap(h.quatern_b);
    byteswap(h.quatern_c);
    byteswap(h.quatern_d);
    byteswap(h.qoffset_x);
    byteswap(h.qoffset_y);
    byteswap(h.qoffset_z);
    for (auto& v : h.srow_x) byteswap(v);
    for (auto& v : h.srow_y) byteswap(v);
    for (auto& v : h.srow_z) byteswap(v);
}

class GzReader {
public:
    explicit GzReader(const std::string& path) : path_(path) {
        f_ = gzopen(path.c_str(), "rb");
        if (!f_) throw io_error("cannot open " + path);
    }
    ~GzReader() {
        if (f_) gzclose(f_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* dst, std::size_t bytes) {
        auto* p = static_cast<unsigned char*>(dst);
        while (bytes > 0) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
            const int got = gzread(f_, p, chunk);
            if (got <= 0) throw io_error(path_ + ": unexpected end of file");
            p += got;
            bytes -= static_cast<std::size_t>(got);
        }
    }

    void skip(std::size_t bytes) {
        std::array<unsigned char, 4096> sink;
        while (bytes > 0) {
            const std::size_t chunk = std::min(bytes, sink.size());
            read_exact(sink.data(), chunk);
            bytes -= chunk;
        }
    }

private:
    std::string path_;
    gzFile f_ = nullptr;
};

/// Streaming writer producing a plain file, or a gzip member with a fixed
/// header (zero mtime) so repeated runs emit byte-identical output.
class Writer {
public:
    explicit Writer(const std::string& path)
        : path_(path), gz_(path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        f_ = std::fopen(path.c_str(), "wb");
        if (!f_) throw io_error("cannot write " + path);
        if (gz_) {
            std::memset(&strm_, 0, sizeof(strm_));
            if (deflateInit2(&strm_, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                             Z_DEFAULT_STRATEGY) != Z_OK)
                throw io_error("deflateInit2 failed for " + path);
            std::memset(&gzhdr_, 0, sizeof(gzhdr_));
            gzhdr_.time = 0;
            gzhdr_.os = 3; // unix, fixed for reproducibility
            deflateSetHeader(&strm_, &gzhdr_);
        }
    }

    ~Writer() {
        if (f_) {
            if (gz_ && !finished_) finish_deflate();
            std::fclose(f_);
        }
    }
    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    void write(const void* src, std::size_t bytes) {
        if (!gz_) {
            if (std::fwrite(src, 1, bytes, f_) != bytes) throw io_error("short write to " + path_);
            return;
        }
        strm_.next_in = const_cast<Bytef*>(static_cast<const Bytef*>(src));
        while (bytes > 0) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
            strm_.avail_in = chunk;
            pump(Z_NO_FLUSH);
            bytes -= chunk - strm_.avail_in;
        }
    }

    void close() {
        if (gz_ && !finished_) finish_deflate();
        if (std::fclose(f_) != 0) throw io_error("close failed for " + path_);
        f_ = nullptr;
    }

private:
    void pump(int flush) {
        do {
            strm_.next_out = buf_.data();
            strm_.avail_out = static_cast<unsigned>(buf_.size());
            const int rc = deflate(&strm_, flush);
            if (rc == Z_STREAM_ERROR) throw io_error("deflate failed for " + path_);
            const std::size_t produced = buf_.size() - strm_.avail_out;
            if (produced > 0 && std::fwrite(buf_.data(), 1, produced, f_) != produced)
                throw io_error("short write to " + path_);
            if (flush == Z_FINISH && rc == Z_STREAM_END) break;
        } while (strm_.avail_out == 0 || (flush == Z_FINISH));
    }

    void finish_deflate() {
        strm_.next_in = nullptr;
        strm_.avail_in = 0;
        pump(Z_FINISH);
        deflateEnd(&strm_);
        finished_ = true;
    }

    std::string path_;
    bool gz_ = false;
    bool finished_ = false;
    std::FILE* f_ = nullptr;
    z_stream strm_{};
    gz_header gzhdr_{};
    std::array<Bytef, 1 << 16> buf_{};
};

struct Parsed {
    VolumeFileHeader header;
    std::vector<float> canonical_data; // reordered to +x,+y,+z axis order
    Dims canonical_dims;
    Spacing canonical_spacing;
};

inline int elem_size(DataKind k) {
    switch (k) {
        case DataKind::U8: return 1;
        case DataKind::I16: return 2;
        case DataKind::I32: return 4;
        case DataKind::F32: return 4;
        case DataKind::F64: return 8;
    }
    throw io_error("unsupported data kind");
}

struct AxisMap {
    std::array<int, 3> world_axis{0, 1, 2}; // world axis fed by input axis c
    std::array<int, 3> flip{0, 0, 0};       // input axis c runs against world
};

inline AxisMap orientation_map(const std::array<std::array<double, 4>, 3>& affine,
                               const Spacing& pix, const std::string& path) {
    AxisMap map;
    std::array<char, 3> taken{0, 0, 0};
    const std::array<double, 3> pixv{pix.dx, pix.dy, pix.dz};
    for (int c = 0; c < 3; ++c) {
        double best = 0.0;
        int row = 0;
        double norm2 = 0.0;
        for (int r = 0; r < 3; ++r) {
            const double v = affine[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            norm2 += v * v;
            if (std::abs(v) > std::abs(best)) {
                best = v;
                row = r;
            }
        }
        const double norm = std::sqrt(norm2);
        if (std::abs(norm - pixv[static_cast<std::size_t>(c)]) > 1e-3)
            throw io_error(path + ": affine column norm disagrees with pixdim");
        for (int r = 0; r < 3; ++r) {
            const double v = affine[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (r != row && std::abs(v) > 1e-3 * std::abs(best))
                throw io_error(path + ": oblique or sheared affine is not supported");
        }
        if (taken[static_cast<std::size_t>(row)])
            throw io_error(path + ": degenerate affine (two axes share a world direction)");
        taken[static_cast<std::size_t>(row)] = 1;
        map.world_axis[static_cast<std::size_t>(c)] = row;
        map.flip[static_cast<std::size_t>(c)] = best < 0.0 ? 1 : 0;
    }
    return map;
}

inline Parsed read_parsed(const std::string& path) {
    GzReader in(path);
    Nifti1Header h{};
    in.read_exact(&h, sizeof(h));

    bool swapped = false;
    if (h.sizeof_hdr != 348) {
        swap_header(h);
        swapped = true;
        if (h.sizeof_hdr != 348) throw io_error(path + ": not a NIfTI-1 file (bad header size)");
    }
    const bool single = std::memcmp(h.magic, "n+1", 4) == 0;
    const bool pair = std::memcmp(h.magic, "ni1", 4) == 0;
    if (!single && !pair) throw io_error(path + ": not a NIfTI-1 file (magic mismatch)");

    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) throw io_error(path + ": invalid dimension count");
    std::array<int, 7> ext;
    for (int i = 0; i < 7; ++i) ext[static_cast<std::size_t>(i)] = i < ndim ? h.dim[i + 1] : 1;
    for (int i = 3; i < 7; ++i)
        if (ext[static_cast<std::size_t>(i)] > 1)
            throw io_error(path + ": only 3D volumes are supported");
    const Dims dims{std::max(ext[0], 1), std::max(ext[1], 1), std::max(ext[2], 1)};
    if (ext[0] < 1 || ext[1] < 1 || ext[2] < 1) throw io_error(path + ": non-positive dimension");
    const std::int64_t voxels = static_cast<std::int64_t>(dims.nx) * dims.ny * dims.nz;
    if (voxels > (std::int64_t{1} << 31)) throw io_error(path + ": dimension overflow");

    DataKind kind;
    switch (h.datatype) {
        case 2: kind = DataKind::U8; break;
        case 4: kind = DataKind::I16; break;
        case 8: kind = DataKind::I32; break;
        case 16: kind = DataKind::F32; break;
        case 64: kind = DataKind::F64; break;
        default:
            throw io_error(path + ": unsupported data type code " + std::to_string(h.datatype));
    }

    Spacing pix;
    try {
        pix = Spacing(h.pixdim[1], h.pixdim[2], h.pixdim[3]);
    } catch (const parameter_error&) {
        throw io_error(path + ": non-positive pixel dimensions");
    }

    std::array<std::array<double, 4>, 3> affine{};
    if (h.sform_code > 0) {
        for (int c = 0; c < 4; ++c) {
            affine[0][static_cast<std::size_t>(c)] = h.srow_x[c];
            affine[1][static_cast<std::size_t>(c)] = h.srow_y[c];
            affine[2][static_cast<std::size_t>(c)] = h.srow_z[c];
        }
    } else if (h.qform_code > 0) {
        const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        const double a2 = 1.0 - (b * b + c * c + d * d);
        const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
        const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
        const double r[3][3] = {
            {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
            {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
        const double off[3] = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
        const double sc[3] = {pix.dx, pix.dy, pix.dz * qfac};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                affine[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    r[i][j] * sc[j];
            affine[static_cast<std::size_t>(i)][3] = off[i];
        }
    } else {
        affine[0][0] = pix.dx;
        affine[1][1] = pix.dy;
        affine[2][2] = pix.dz;
    }

    const AxisMap map = orientation_map(affine, pix, path);

    // Payload: inside this file after vox_offset, or in the .img companion.
    const std::size_t esize = static_cast<std::size_t>(elem_size(kind));
    const std::size_t payload = static_cast<std::size_t>(voxels) * esize;
    std::vector<unsigned char> raw(payload);
    if (single) {
        const long offset = static_cast<long>(h.vox_offset);
        if (offset < 348) throw io_error(path + ": invalid data offset");
        in.skip(static_cast<std::size_t>(offset) - sizeof(h));
        in.read_exact(raw.data(), payload);
    } else {
        std::string img = path;
        const auto replace_ext = [&](const std::string& from, const std::string& to) {
            const auto pos = img.rfind(from);
            if (pos != std::string::npos && pos == img.size() - from.size()) {
                img.replace(pos, from.size(), to);
                return true;
            }
            return false;
        };
        if (!replace_ext(".hdr.gz", ".img.gz") && !replace_ext(".hdr", ".img"))
            throw io_error(path + ": header/image pair requires a .hdr path");
        GzReader data(img);
        data.skip(static_cast<std::size_t>(std::max(0L, static_cast<long>(h.vox_offset))));
        data.read_exact(raw.data(), payload);
    }

    const double slope = (h.scl_slope == 0.0f) ? 1.0 : static_cast<double>(h.scl_slope);
    const double inter = (h.scl_slope == 0.0f) ? 0.0 : static_cast<double>(h.scl_inter);

    std::vector<float> values(static_cast<std::size_t>(voxels));
    const auto scale_one = [&](std::size_t i, double stored) {
        const double v = stored * slope + inter;
        if (!std::isfinite(v))
            throw io_error(path + ": non-finite sample at voxel index " + std::to_string(i));
        values[i] = static_cast<float>(v);
    };
    for (std::size_t i = 0; i < values.size(); ++i) {
        const unsigned char* src = raw.data() + i * esize;
        switch (kind) {
            case DataKind::U8: scale_one(i, *src); break;
            case DataKind::I16: {
                std::int16_t v;
                std::memcpy(&v, src, 2);
                if (swapped) byteswap(v);
                scale_one(i, v);
                break;
            }
            case DataKind::I32: {
                std::int32_t v;
                std::memcpy(&v, src, 4);
                if (swapped) byteswap(v);
                scale_one(i, v);
                break;
            }
            case DataKind::F32: {
                float v;
                std::memcpy(&v, src, 4);
                if (swapped) byteswap(v);
                scale_one(i, v);
                break;
            }
            case DataKind::F64: {
                double v;
                std::memcpy(&v, src, 8);
                if (swapped) byteswap(v);
                scale_one(i, v);
                break;
            }
        }
    }

    Parsed out;
    out.header.dims = dims;
    out.header.spacing = pix;
    out.header.data_kind = kind;
    out.header.scale_slope = slope;
    out.header.scale_intercept = inter;
    out.header.orientation = affine;

    // Reorder to the canonical axis order (+x fastest, then +y, +z).
    std::array<int, 3> in_dims{dims.nx, dims.ny, dims.nz};
    std::array<int, 3> out_dims_a{0, 0, 0};
    std::array<double, 3> out_sp{0, 0, 0};
    const std::array<double, 3> in_sp{pix.dx, pix.dy, pix.dz};
    for (int c = 0; c < 3; ++c) {
        out_dims_a[static_cast<std::size_t>(map.world_axis[static_cast<std::size_t>(c)])] =
            in_dims[static_cast<std::size_t>(c)];
        out_sp[static_cast<std::size_t>(map.world_axis[static_cast<std::size_t>(c)])] =
            in_sp[static_cast<std::size_t>(c)];
    }
    out.canonical_dims = Dims{out_dims_a[0], out_dims_a[1], out_dims_a[2]};
    out.canonical_spacing = Spacing(out_sp[0], out_sp[1], out_sp[2]);

    const bool identity = map.world_axis == std::array<int, 3>{0, 1, 2} &&
                          map.flip == std::array<int, 3>{0, 0, 0};
    if (identity) {
        out.canonical_data = std::move(values);
    } else {
        out.canonical_data.resize(values.size());
        const Dims od = out.canonical_dims;
        std::array<int, 3> in_pos{};
        std::size_t src = 0;
        for (in_pos[2] = 0; in_pos[2] < in_dims[2]; ++in_pos[2])
            for (in_pos[1] = 0; in_pos[1] < in_dims[1]; ++in_pos[1])
                for (in_pos[0] = 0; in_pos[0] < in_dims[0]; ++in_pos[0], ++src) {
                    std::array<int, 3> w{};
                    for (int c = 0; c < 3; ++c) {
                        const auto cu = static_cast<std::size_t>(c);
                        const int p = map.flip[cu] ? in_dims[cu] - 1 - in_pos[cu] : in_pos[cu];
                        w[static_cast<std::size_t>(map.world_axis[cu])] = p;
                    }
                    out.canonical_data[linear_index(od, w[0], w[1], w[2])] = values[src];
                }
    }
    return out;
}

} // namespace nifti_detail

inline VolumeFileHeader read_header(const std::string& path) {
    return nifti_detail::read_parsed(path).header;
}

/// Load a NIfTI-1 volume (.nii or .nii.gz), apply slope/intercept scaling,
/// and reorient to the canonical axis order. The caller states the value
/// unit since the format does not carry it.
inline ScalarVolume read_volume(const std::string& path, Unit unit) {
    auto parsed = nifti_detail::read_parsed(path);
    return ScalarVolume(parsed.canonical_dims, parsed.canonical_spacing, unit,
                        std::move(parsed.canonical_data));
}

struct MaskReadResult {
    BinaryMask mask;
    /// Number of samples that were neither 0 nor 1 (treated as foreground
    /// when nonzero).
    std::size_t nonbinary_values = 0;
};

inline MaskReadResult read_mask(const std::string& path) {
    auto parsed = nifti_detail::read_parsed(path);
    std::vector<std::uint8_t> bits(parsed.canonical_data.size());
    std::size_t warnings = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const float v = parsed.canonical_data[i];
        bits[i] = v != 0.0f ? 1 : 0;
        if (v != 0.0f && v != 1.0f) ++warnings;
    }
    return MaskReadResult{
        BinaryMask(parsed.canonical_dims, parsed.canonical_spacing, std::move(bits)), warnings};
}

/// Write a canonical-orientation NIfTI-1 single file; `.gz` paths are
/// gzip-compressed with a fixed stream header so identical volumes produce
/// identical bytes. Values are stored as (v - intercept) / slope.
inline void write_volume(const std::string& path, const ScalarVolume& vol,
                         DataKind kind = DataKind::F32, double slope = 1.0,
                         double intercept = 0.0) {
    if (slope == 0.0) throw parameter_error("write_volume: slope must be nonzero");
    nifti_detail::Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(vol.dims().nx);
    h.dim[2] = static_cast<std::int16_t>(vol.dims().ny);
    h.dim[3] = static_cast<std::int16_t>(vol.dims().nz);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = static_cast<std::int16_t>(kind);
    h.bitpix = static_cast<std::int16_t>(8 * nifti_detail::elem_size(kind));
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(vol.spacing().dx);
    h.pixdim[2] = static_cast<float>(vol.spacing().dy);
    h.pixdim[3] = static_cast<float>(vol.spacing().dz);
    h.vox_offset = 352.0f;
    h.scl_slope = static_cast<float>(slope);
    h.scl_inter = static_cast<float>(intercept);
    h.xyzt_units = 2; // millimeters
    h.sform_code = 1;
    h.srow_x[0] = static_cast<float>(vol.spacing().dx);
    h.srow_y[1] = static_cast<float>(vol.spacing().dy);
    h.srow_z[2] = static_cast<float>(vol.spacing().dz);
    std::snprintf(h.descrip, sizeof(h.descrip), "%s", "lesioneval");
    std::memcpy(h.magic, "n+1", 4);

    nifti_detail::Writer out(path);
    out.write(&h, sizeof(h));
    const char pad[4] = {0, 0, 0, 0};
    out.write(pad, 4); // no extensions

    const std::size_t n = vol.size();
    const int esize = nifti_detail::elem_size(kind);
    std::vector<unsigned char> buf(n * static_cast<std::size_t>(esize));
    for (std::size_t i = 0; i < n; ++i) {
        const double stored = (static_cast<double>(vol[i]) - intercept) / slope;
        unsigned char* dst = buf.data() + i * static_cast<std::size_t>(esize);
        switch (kind) {
            case DataKind::U8:
                dst[0] = static_cast<unsigned char>(std::lround(stored));
                break;
            case DataKind::I16: {
                const std::int16_t v = static_cast<std::int16_t>(std::lround(stored));
                std::memcpy(dst, &v, 2);
                break;
            }
            case DataKind::I32: {
                const std::int32_t v = static_cast<std::int32_t>(std::lround(stored));
                std::memcpy(dst, &v, 4);
                break;
            }
            case DataKind::F32: {
                const float v = static_cast<float>(stored);
                std::memcpy(dst, &v, 4);
                break;
            }
            case DataKind::F64: {
                std::memcpy(dst, &stored, 8);
                break;
            }
        }
    }
    out.write(buf.data(), buf.size());
    out.close();
}

inline void write_mask(const std::string& path, const BinaryMask& mask) {
    std::vector<float> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 1.0f : 0.0f;
    write_volume(path,
                 ScalarVolume(mask.dims(), mask.spacing(), Unit::Normalized, std::move(data)),
                 DataKind::U8);
}

} // namespace lesioneval
