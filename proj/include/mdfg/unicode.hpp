#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utypes.h>

#include "mdfg/util.hpp"

namespace mdfg {

// Decodes UTF-8 into Unicode scalar values. Invalid byte sequences become
// U+FFFD, one replacement per bogus byte; web text is full of them and the
// pipeline must never throw on content.
inline std::vector<char32_t> utf8_decode(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size() / 2);
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        unsigned char c = s[i];
        if (c < 0x80) {
            out.push_back(c);
            ++i;
            continue;
        }
        int len = 0;
        char32_t cp = 0;
        if ((c & 0xE0) == 0xC0) { len = 2; cp = c & 0x1F; }
        else if ((c & 0xF0) == 0xE0) { len = 3; cp = c & 0x0F; }
        else if ((c & 0xF8) == 0xF0) { len = 4; cp = c & 0x07; }
        else { out.push_back(0xFFFD); ++i; continue; }
        if (i + len > n) { out.push_back(0xFFFD); ++i; continue; }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            unsigned char cc = s[i + k];
            if ((cc & 0xC0) != 0x80) { ok = false; break; }
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Reject overlong forms and surrogates.
        if (!ok || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF) ||
            (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void utf8_append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += char(cp);
    } else if (cp < 0x800) {
        out += char(0xC0 | (cp >> 6));
        out += char(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += char(0xE0 | (cp >> 12));
        out += char(0x80 | ((cp >> 6) & 0x3F));
        out += char(0x80 | (cp & 0x3F));
    } else {
        out += char(0xF0 | (cp >> 18));
        out += char(0x80 | ((cp >> 12) & 0x3F));
        out += char(0x80 | ((cp >> 6) & 0x3F));
        out += char(0x80 | (cp & 0x3F));
    }
}

inline std::string utf8_encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size() * 3);
    for (char32_t cp : cps) utf8_append(out, cp);
    return out;
}

// CJK blocks used by the character-proportion filter: Unified Ideographs,
// Extension A, Compatibility Ideographs.
inline bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) ||
           (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0xF900 && cp <= 0xFAFF);
}

inline bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline size_t utf8_length(std::string_view s) {
    size_t count = 0;
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = s[i];
        if (c < 0x80) i += 1;
        else if ((c & 0xE0) == 0xC0) i += 2;
        else if ((c & 0xF0) == 0xE0) i += 3;
        else if ((c & 0xF8) == 0xF0) i += 4;
        else i += 1;
        ++count;
    }
    return count;
}

// Canonical composition (NFC) via ICU. Pure CJK text passes through
// unchanged; this canonicalizes combining sequences and compatibility
// ideographs before hashing so fingerprints do not depend on the encoder
// that produced the source file.
inline std::string nfc_normalize(std::string_view s) {
    if (s.empty()) return {};
    UErrorCode err = U_ZERO_ERROR;
    const UNormalizer2* norm = unorm2_getNFCInstance(&err);
    if (U_FAILURE(err)) throw Error("ICU NFC instance unavailable");

    std::vector<UChar> u16(s.size() + 1);
    int32_t u16len = 0;
    u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16len,
                  s.data(), static_cast<int32_t>(s.size()), &err);
    if (err == U_INVALID_CHAR_FOUND || err == U_ILLEGAL_CHAR_FOUND) {
        // Re-encode through the lenient decoder, then retry once.
        err = U_ZERO_ERROR;
        std::string repaired = utf8_encode(utf8_decode(s));
        u16.assign(repaired.size() + 1, 0);
        u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16len,
                      repaired.data(), static_cast<int32_t>(repaired.size()), &err);
    }
    if (U_FAILURE(err)) throw Error("UTF-8 to UTF-16 conversion failed");

    int32_t need = unorm2_normalize(norm, u16.data(), u16len, nullptr, 0, &err);
    if (err != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(err)) throw Error("NFC preflight failed");
    err = U_ZERO_ERROR;
    std::vector<UChar> nrm(static_cast<size_t>(need) + 1);
    int32_t nlen = unorm2_normalize(norm, u16.data(), u16len, nrm.data(),
                                    static_cast<int32_t>(nrm.size()), &err);
    if (U_FAILURE(err)) throw Error("NFC normalization failed");

    int32_t u8need = 0;
    u_strToUTF8(nullptr, 0, &u8need, nrm.data(), nlen, &err);
    if (err != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(err)) throw Error("UTF-16 to UTF-8 preflight failed");
    err = U_ZERO_ERROR;
    std::string out(static_cast<size_t>(u8need), '\0');
    int32_t u8len = 0;
    u_strToUTF8(out.data(), u8need, &u8len, nrm.data(), nlen, &err);
    if (U_FAILURE(err)) throw Error("UTF-16 to UTF-8 conversion failed");
    out.resize(static_cast<size_t>(u8len));
    return out;
}

}  // namespace mdfg
