#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "bdan/data_io.hpp"
#include "le_io.hpp"

namespace bdan {

namespace {
constexpr unsigned char kMagic[4] = {0x45, 0x45, 0x47, 0x43};  // "EEGC"
}

namespace le {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return buf;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace le

const std::vector<std::uint32_t>& EpochSet::labels() const {
    if (sealed_) throw LabelTripwire("labels of subject '" + subject_id + "' are sealed");
    return labels_;
}

void EpochSet::set_labels(std::vector<std::uint32_t> labels) { labels_ = std::move(labels); }

EpochSet EpochSet::subset(const std::vector<std::size_t>& indices) const {
    EpochSet out;
    out.subject_id = subject_id;
    out.sample_rate_hz = sample_rate_hz;
    out.class_count = class_count;
    out.electrodes = electrodes;
    out.time_points = time_points;
    out.sealed_ = sealed_;
    const std::size_t stride = electrodes * time_points;
    out.data.reserve(indices.size() * stride);
    out.labels_.reserve(indices.size());
    out.session_ids.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw std::out_of_range("EpochSet::subset: index " + std::to_string(i));
        out.data.insert(out.data.end(), data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                        data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
        if (!labels_.empty()) out.labels_.push_back(labels_[i]);
        out.session_ids.push_back(session_ids[i]);
    }
    return out;
}

void EpochSet::validate() const {
    const std::size_t n = size();
    if (n == 0) throw std::invalid_argument("EpochSet: no trials");
    if (electrodes == 0 || time_points == 0) throw std::invalid_argument("EpochSet: zero electrodes or time points");
    if (data.size() != n * electrodes * time_points)
        throw std::invalid_argument("EpochSet: data length does not match n x electrodes x time");
    if (labels_.size() != n) throw std::invalid_argument("EpochSet: label count does not match trial count");
    if (class_count < 2) throw std::invalid_argument("EpochSet: class_count must be at least 2");
    if (n < class_count) throw std::invalid_argument("EpochSet: fewer trials than classes");
    for (auto l : labels_)
        if (l >= class_count) throw std::invalid_argument("EpochSet: label " + std::to_string(l) + " >= class_count");
    const std::set<std::uint32_t> sessions(session_ids.begin(), session_ids.end());
    if (*sessions.begin() != 0 || *sessions.rbegin() + 1 != sessions.size())
        throw std::invalid_argument("EpochSet: session ids must form a contiguous range from 0");
    if (!(sample_rate_hz > 0)) throw std::invalid_argument("EpochSet: sample rate must be positive");
    if (subject_id.size() > 255) throw std::invalid_argument("EpochSet: subject id longer than 255 bytes");
    if (std::any_of(data.begin(), data.end(), [](float v) { return !std::isfinite(v); }))
        throw std::invalid_argument("EpochSet: non-finite sample");
}

std::vector<unsigned char> encode_container(const EpochSet& set) {
    set.validate();
    const auto& labels = set.labels();
    std::vector<unsigned char> out;
    out.reserve(32 + set.subject_id.size() + set.data.size() * 4 + set.size() * 8);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    le::put<std::uint32_t>(out, kContainerVersion);
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(set.electrodes));
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(set.time_points));
    le::put<std::uint32_t>(out, set.class_count);
    le::put<float>(out, set.sample_rate_hz);
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(set.subject_id.size()));
    out.insert(out.end(), set.subject_id.begin(), set.subject_id.end());
    for (float v : set.data) le::put<float>(out, v);
    for (auto l : labels) le::put<std::uint32_t>(out, l);
    for (auto s : set.session_ids) le::put<std::uint32_t>(out, s);
    return out;
}

EpochSet decode_container(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw FormatError("bad magic, expected 'EEGC'", 0);
    le::Reader r(bytes);
    std::string magic;
    r.bytes(4, magic);

    std::uint32_t version = 0, n = 0, e = 0, t = 0, c = 0;
    const std::size_t version_at = r.offset();
    if (!r.get(version)) throw FormatError("truncated header", r.offset());
    if (version != kContainerVersion)
        throw FormatError("unsupported version " + std::to_string(version), version_at);
    if (!r.get(n) || !r.get(e) || !r.get(t) || !r.get(c)) throw FormatError("truncated header", r.offset());
    if (n == 0) throw FormatError("zero trial count", 8);
    if (e == 0 || t == 0) throw FormatError("zero electrode or time count", 12);
    if (c < 2) throw FormatError("class count below 2", 20);

    EpochSet set;
    set.electrodes = e;
    set.time_points = t;
    set.class_count = c;
    if (!r.get(set.sample_rate_hz)) throw FormatError("truncated header", r.offset());
    std::uint8_t id_len = 0;
    if (!r.get(id_len)) throw FormatError("truncated header", r.offset());
    if (!r.bytes(id_len, set.subject_id)) throw FormatError("truncated subject id", r.offset());

    const std::size_t count = std::size_t{n} * e * t;
    const std::size_t need = count * 4 + std::size_t{n} * 8;
    if (r.remaining() < need) throw FormatError("truncated payload", bytes.size());
    set.data.resize(count);
    for (auto& v : set.data) r.get(v);
    std::vector<std::uint32_t> labels(n);
    for (auto& l : labels) {
        const std::size_t at = r.offset();
        r.get(l);
        if (l >= c) throw FormatError("label " + std::to_string(l) + " out of range", at);
    }
    set.set_labels(std::move(labels));
    set.session_ids.resize(n);
    for (auto& s : set.session_ids) r.get(s);
    if (r.remaining() != 0) throw FormatError("trailing bytes after payload", r.offset());
    try {
        set.validate();
    } catch (const std::invalid_argument& err) {
        throw FormatError(err.what(), 0);
    }
    return set;
}

void save_container(const EpochSet& set, const std::filesystem::path& path) {
    le::write_file(path.string(), encode_container(set));
}

EpochSet load_container(const std::filesystem::path& path) { return decode_container(le::read_file(path.string())); }

}  // namespace bdan
