#include "segicl/vocab.hpp"

#include <fstream>

#include "segicl/errors.hpp"
#include "segicl/util.hpp"

namespace segicl {

namespace {

// 13 instruction words plus filler up to exactly 64, kept sorted per group so
// the builtin table is stable by construction.
const std::vector<std::string>& builtin_words() {
    static const std::vector<std::string> words{
        // instruction template words
        "segment", "the", "disc", "ring", "blobs", "wedge", "in", "this",
        "flat", "textured", "inverted", "speckle", "image",
        // filler
        "a", "an", "and", "are", "as", "at", "be", "bright", "by", "dark",
        "each", "find", "for", "from", "full", "has", "have", "is", "it",
        "its", "left", "light", "locate", "low", "mark", "mask", "no",
        "noise", "not", "of", "on", "one", "or", "outline", "over", "pair",
        "region", "right", "round", "shape", "show", "small", "some", "that",
        "to", "trace", "two", "under", "wide", "with", "zero"};
    return words;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        if (t.empty()) throw vocab_error("vocab: empty token at line " + std::to_string(i + 1));
        if (!index_.emplace(t, static_cast<int>(i)).second)
            throw vocab_error("vocab: duplicate token '" + t + "'");
    }
    const auto special = [this](const char* name) {
        const auto it = index_.find(name);
        if (it == index_.end())
            throw vocab_error("vocab: missing special token " + std::string(name));
        return it->second;
    };
    img_ = special(kImg);
    mask_ = special(kMask);
    sep_ = special(kSep);
    state_ = special(kState);
}

Vocab Vocab::builtin() {
    std::vector<std::string> tokens{kImg, kMask, kSep, kState};
    tokens.insert(tokens.end(), builtin_words().begin(), builtin_words().end());
    return Vocab(std::move(tokens));
}

Vocab Vocab::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vocab_error("vocab: cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    if (tokens.empty()) throw vocab_error("vocab: empty file " + path);
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::string& path) const {
    std::string text;
    for (const auto& t : tokens_) {
        text += t;
        text += '\n';
    }
    write_text_file(path, text);
}

int Vocab::id(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) throw vocab_error("vocab: unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size())
        throw vocab_error("vocab: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode_words(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

}  // namespace segicl
