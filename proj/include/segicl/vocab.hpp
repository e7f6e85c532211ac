#pragma once

#include <map>
#include <string>
#include <vector>

namespace segicl {

// Word-level vocabulary: four special tokens followed by 64 lowercase words.
// The on-disk format is one token per line; the line number is the token id.
class Vocab {
public:
    static constexpr const char* kImg = "<img>";
    static constexpr const char* kMask = "<mask>";
    static constexpr const char* kSep = "<sep>";
    static constexpr const char* kState = "<state>";

    static Vocab builtin();
    static Vocab from_file(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(tokens_.size()); }
    int id(const std::string& token) const;
    const std::string& token(int id) const;
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    // Whitespace-split word ids; unknown word throws vocab_error.
    std::vector<int> encode_words(const std::string& text) const;

    int img_id() const { return img_; }
    int mask_id() const { return mask_; }
    int sep_id() const { return sep_; }
    int state_id() const { return state_; }

private:
    explicit Vocab(std::vector<std::string> tokens);

    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    int img_ = -1, mask_ = -1, sep_ = -1, state_ = -1;
};

}  // namespace segicl
