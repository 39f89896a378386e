#include "synergy/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace synergy {

namespace {
bool g_parallel = true;
}
void set_parallel(bool on) { g_parallel = on; }
bool parallel_enabled() { return g_parallel; }

namespace corpus {

namespace {

// Length of the UTF-8 sequence starting with lead byte b, or 0 if invalid.
int utf8_seq_len(unsigned char b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 0;
}

// Validates the sequence at text[i..], returns its length or 0.
int utf8_check_at(std::string_view text, size_t i) {
    const unsigned char b0 = static_cast<unsigned char>(text[i]);
    const int len = utf8_seq_len(b0);
    if (len == 0 || i + len > text.size()) return 0;
    uint32_t cp = 0;
    switch (len) {
        case 1: return 1;
        case 2: cp = b0 & 0x1F; break;
        case 3: cp = b0 & 0x0F; break;
        case 4: cp = b0 & 0x07; break;
    }
    for (int j = 1; j < len; ++j) {
        const unsigned char c = static_cast<unsigned char>(text[i + j]);
        if ((c & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (c & 0x3F);
    }
    // overlong, surrogate and out-of-range rejection
    if (len == 2 && cp < 0x80) return 0;
    if (len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) return 0;
    if (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) return 0;
    return len;
}

bool is_ws(unsigned char b) { return b == ' ' || b == '\t' || b == '\n' || b == '\r'; }

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

bool utf8_valid(std::string_view bytes) {
    size_t i = 0;
    while (i < bytes.size()) {
        const int len = utf8_check_at(bytes, i);
        if (len == 0) return false;
        i += len;
    }
    return true;
}

std::vector<int> utf8_tokenize(std::string_view text) {
    if (!utf8_valid(text)) throw SynergyError("utf8_tokenize: input is not valid UTF-8");
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(static_cast<unsigned char>(c));
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id > 255) throw SynergyError("detokenize: id out of byte range");
        out.push_back(static_cast<char>(id));
    }
    return out;
}

std::vector<ByteSegment> clip_segments(std::string_view text, int64_t max_bytes) {
    if (max_bytes < 3) throw SynergyError("clip_segments: max_bytes must be >= 3");
    if (!utf8_valid(text)) throw SynergyError("clip_segments: input is not valid UTF-8");
    const int64_t limit = max_bytes - 2;  // bos/eos reserved
    std::vector<ByteSegment> segs;
    size_t start = 0;
    while (start < text.size()) {
        std::string_view rest = text.substr(start);
        if (static_cast<int64_t>(rest.size()) <= limit) {
            ByteSegment seg;
            seg.ids = utf8_tokenize(rest);
            seg.byte_len = static_cast<int64_t>(seg.ids.size());
            segs.push_back(std::move(seg));
            break;
        }
        // split point s: segment is rest[0, s). Prefer the last whitespace
        // with s <= limit (that byte is dropped), else the last codepoint
        // boundary <= limit.
        int64_t split = -1;
        bool drop_ws = false;
        const int64_t search_hi = std::min<int64_t>(limit, static_cast<int64_t>(rest.size()) - 1);
        for (int64_t s = search_hi; s >= 1; --s) {
            if (is_ws(static_cast<unsigned char>(rest[s]))) {
                split = s;
                drop_ws = true;
                break;
            }
        }
        if (split < 0) {
            // codepoint boundaries are positions not inside a multi-byte sequence
            int64_t s = 0;
            int64_t last_boundary = 0;
            while (s <= limit) {
                last_boundary = s;
                s += utf8_check_at(rest, static_cast<size_t>(s));
            }
            split = last_boundary;
            if (split == 0) split = limit;  // cannot happen for valid UTF-8 with limit >= 6
        }
        ByteSegment seg;
        seg.ids = utf8_tokenize(rest.substr(0, static_cast<size_t>(split)));
        seg.byte_len = static_cast<int64_t>(seg.ids.size());
        if (seg.byte_len > 0) segs.push_back(std::move(seg));
        start += static_cast<size_t>(split) + (drop_ws ? 1 : 0);
    }
    return segs;
}

CorpusSplit split_corpus(int64_t n_rows, double train_fraction, uint64_t seed) {
    if (n_rows <= 0) throw SynergyError("split_corpus: empty corpus");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw SynergyError("split_corpus: train_fraction must be in (0,1)");
    std::vector<int64_t> idx(static_cast<size_t>(n_rows));
    for (int64_t i = 0; i < n_rows; ++i) idx[static_cast<size_t>(i)] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    int64_t n_train = static_cast<int64_t>(std::floor(static_cast<double>(n_rows) * train_fraction));
    n_train = std::max<int64_t>(1, n_train);
    const int64_t rem = n_rows - n_train;
    const int64_t n_eval = (rem + 1) / 2;  // eval takes the odd row
    CorpusSplit split;
    split.train.assign(idx.begin(), idx.begin() + n_train);
    split.eval.assign(idx.begin() + n_train, idx.begin() + n_train + n_eval);
    split.test.assign(idx.begin() + n_train + n_eval, idx.end());
    return split;
}

Batch make_batch(const std::vector<ByteSegment>& segments, int64_t context_length,
                 const SpecialTokens& sp) {
    std::vector<std::vector<int>> rows;
    rows.reserve(segments.size());
    for (const auto& s : segments) rows.push_back(s.ids);
    return make_batch_ids(rows, context_length, sp, sp.vocab_size());
}

Batch make_batch_ids(const std::vector<std::vector<int>>& rows, int64_t context_length,
                     const SpecialTokens& sp, int vocab_size) {
    if (rows.empty()) throw SynergyError("make_batch: empty batch");
    int64_t width = 0;
    for (const auto& r : rows) {
        const int64_t need = static_cast<int64_t>(r.size()) + 2;
        if (need > context_length) throw SynergyError("make_batch: segment exceeds context");
        width = std::max(width, need);
    }
    Batch b;
    b.batch = static_cast<int64_t>(rows.size());
    b.width = width;
    b.ids.assign(static_cast<size_t>(b.batch * width), sp.pad);
    b.mask.assign(static_cast<size_t>(b.batch * width), 0);
    for (int64_t r = 0; r < b.batch; ++r) {
        const auto& seg = rows[static_cast<size_t>(r)];
        int* row = b.ids.data() + r * width;
        row[0] = sp.bos;
        for (size_t j = 0; j < seg.size(); ++j) {
            if (seg[j] < 0 || seg[j] >= vocab_size) throw SynergyError("make_batch: id out of range");
            row[j + 1] = seg[j];
        }
        row[seg.size() + 1] = sp.eos;
        // position i has target row[i+1]; mask on while the target is a real
        // token or eos
        for (size_t i = 0; i + 1 <= seg.size() + 1; ++i)
            b.mask[static_cast<size_t>(r * width) + i] = 1;
    }
    return b;
}

namespace {
constexpr char kShardMagic[8] = {'S', 'Y', 'N', 'S', 'E', 'G', '0', '1'};
}

void save_segments(const std::string& path, const std::vector<ByteSegment>& segs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SynergyError("save_segments: cannot open " + path);
    os.write(kShardMagic, 8);
    write_le<uint32_t>(os, 1);  // version
    write_le<uint64_t>(os, segs.size());
    for (const auto& s : segs) {
        write_le<uint64_t>(os, s.ids.size());
        for (int id : s.ids) write_le<uint8_t>(os, static_cast<uint8_t>(id));
    }
}

std::vector<ByteSegment> load_segments(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SynergyError("load_segments: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kShardMagic, 8) != 0) throw SynergyError("load_segments: bad magic");
    const uint32_t version = read_le<uint32_t>(is);
    if (version != 1) throw SynergyError("load_segments: unsupported version");
    const uint64_t n = read_le<uint64_t>(is);
    std::vector<ByteSegment> segs(n);
    for (auto& s : segs) {
        const uint64_t len = read_le<uint64_t>(is);
        s.ids.resize(len);
        for (auto& id : s.ids) id = read_le<uint8_t>(is);
        s.byte_len = static_cast<int64_t>(len);
        if (!is) throw SynergyError("load_segments: truncated shard");
    }
    return segs;
}

std::vector<std::string> read_documents(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SynergyError("read_documents: cannot open " + path);
    std::vector<std::string> docs;
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) {
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            docs.push_back(j.at("text").get<std::string>());
        }
    } else {
        std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        docs.push_back(std::move(all));
    }
    return docs;
}

}  // namespace corpus
}  // namespace synergy
