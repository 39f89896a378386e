#include "synergy/bpe.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace synergy::bpe {

namespace {

// Replace left-to-right non-overlapping occurrences of (a, b) with id.
void apply_merge(std::vector<int>& seq, int a, int b, int id) {
    size_t out = 0;
    for (size_t i = 0; i < seq.size();) {
        if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
            seq[out++] = id;
            i += 2;
        } else {
            seq[out++] = seq[i++];
        }
    }
    seq.resize(out);
}

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

BpeVocab bpe_train(std::string_view corpus_bytes, int vocab_size) {
    if (vocab_size <= 256) throw SynergyError("bpe_train: vocab_size must exceed 256");
    if (corpus_bytes.size() < 2) throw SynergyError("bpe_train: corpus too short");

    BpeVocab vocab;
    vocab.token_bytes.resize(256);
    for (int i = 0; i < 256; ++i) vocab.token_bytes[i] = std::string(1, static_cast<char>(i));

    std::vector<int> seq;
    seq.reserve(corpus_bytes.size());
    for (char c : corpus_bytes) seq.push_back(static_cast<unsigned char>(c));

    const int n_merges = vocab_size - 256;
    for (int mi = 0; mi < n_merges; ++mi) {
        // ordered map gives the lexicographically-smallest tie rule for free
        std::map<std::pair<int, int>, int64_t> counts;
        for (size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
        if (counts.empty()) break;
        std::pair<int, int> best{};
        int64_t best_count = -1;
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best = pair;
                best_count = count;
            }
        }
        const int id = 256 + mi;
        vocab.merges.push_back(best);
        vocab.token_bytes.push_back(vocab.token_bytes[static_cast<size_t>(best.first)] +
                                    vocab.token_bytes[static_cast<size_t>(best.second)]);
        apply_merge(seq, best.first, best.second, id);
    }
    return vocab;
}

std::vector<int> bpe_encode(std::string_view text, const BpeVocab& vocab) {
    std::vector<int> seq;
    seq.reserve(text.size());
    for (char c : text) seq.push_back(static_cast<unsigned char>(c));
    for (size_t i = 0; i < vocab.merges.size(); ++i)
        apply_merge(seq, vocab.merges[i].first, vocab.merges[i].second, 256 + static_cast<int>(i));
    return seq;
}

std::string bpe_decode(const std::vector<int>& ids, const BpeVocab& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab.vocab_size()) throw SynergyError("bpe_decode: id out of range");
        out += vocab.token_bytes[static_cast<size_t>(id)];
    }
    return out;
}

namespace {
constexpr char kVocabMagic[8] = {'S', 'Y', 'N', 'B', 'P', 'E', '0', '1'};
}

void save_vocab(const std::string& path, const BpeVocab& vocab) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SynergyError("save_vocab: cannot open " + path);
    os.write(kVocabMagic, 8);
    write_le<uint32_t>(os, 1);
    write_le<uint32_t>(os, static_cast<uint32_t>(vocab.merges.size()));
    for (const auto& [a, b] : vocab.merges) {
        write_le<uint32_t>(os, static_cast<uint32_t>(a));
        write_le<uint32_t>(os, static_cast<uint32_t>(b));
    }
}

BpeVocab load_vocab(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SynergyError("load_vocab: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kVocabMagic, 8) != 0) throw SynergyError("load_vocab: bad magic");
    if (read_le<uint32_t>(is) != 1) throw SynergyError("load_vocab: unsupported version");
    const uint32_t n = read_le<uint32_t>(is);
    BpeVocab vocab;
    vocab.token_bytes.resize(256);
    for (int i = 0; i < 256; ++i) vocab.token_bytes[i] = std::string(1, static_cast<char>(i));
    for (uint32_t i = 0; i < n; ++i) {
        const int a = static_cast<int>(read_le<uint32_t>(is));
        const int b = static_cast<int>(read_le<uint32_t>(is));
        if (a < 0 || b < 0 || a >= vocab.vocab_size() || b >= vocab.vocab_size())
            throw SynergyError("load_vocab: merge references undefined token");
        vocab.merges.emplace_back(a, b);
        vocab.token_bytes.push_back(vocab.token_bytes[static_cast<size_t>(a)] +
                                    vocab.token_bytes[static_cast<size_t>(b)]);
    }
    if (!is) throw SynergyError("load_vocab: truncated file");
    return vocab;
}

}  // namespace synergy::bpe
