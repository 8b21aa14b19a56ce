// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// METUbet Turkish phone set grouped by manner of articulation. GH (soft g)
// is not a transcription symbol. SIL marks silence and label gaps.

#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace tmenhance {

enum class Attribute {
  kNasals,
  kStops,
  kLiquids,
  kBackVowels,
  kFrontVowels,
  kGlide,
  kAffricate,
  kFricatives,
};

inline constexpr std::array<Attribute, 8> kAllAttributes = {
    Attribute::kNasals,      Attribute::kStops,       Attribute::kLiquids,
    Attribute::kBackVowels,  Attribute::kFrontVowels, Attribute::kGlide,
    Attribute::kAffricate,   Attribute::kFricatives,
};

inline constexpr std::string_view AttributeName(Attribute a) {
  switch (a) {
    case Attribute::kNasals: return "Nasals";
    case Attribute::kStops: return "Stops";
    case Attribute::kLiquids: return "Liquids";
    case Attribute::kBackVowels: return "Back Vowels";
    case Attribute::kFrontVowels: return "Front Vowels";
    case Attribute::kGlide: return "Glide";
    case Attribute::kAffricate: return "Affiricate";
    case Attribute::kFricatives: return "Fricatives";
  }
  return "";
}

// Key used in machine-readable reports, e.g. "back_vowels".
inline constexpr std::string_view AttributeKey(Attribute a) {
  switch (a) {
    case Attribute::kNasals: return "nasals";
    case Attribute::kStops: return "stops";
    case Attribute::kLiquids: return "liquids";
    case Attribute::kBackVowels: return "back_vowels";
    case Attribute::kFrontVowels: return "front_vowels";
    case Attribute::kGlide: return "glide";
    case Attribute::kAffricate: return "affricate";
    case Attribute::kFricatives: return "fricatives";
  }
  return "";
}

struct PhoneInfo {
  std::string_view symbol;
  Attribute attribute;
};

inline constexpr std::string_view kSilence = "SIL";

inline constexpr std::array<PhoneInfo, 38> kMetuBet = {{
    {"AA", Attribute::kBackVowels},  {"A", Attribute::kBackVowels},
    {"I", Attribute::kBackVowels},   {"O", Attribute::kBackVowels},
    {"U", Attribute::kBackVowels},   {"E", Attribute::kFrontVowels},
    {"EE", Attribute::kFrontVowels}, {"IY", Attribute::kFrontVowels},
    {"OE", Attribute::kFrontVowels}, {"UE", Attribute::kFrontVowels},
    {"M", Attribute::kNasals},       {"NN", Attribute::kNasals},
    {"N", Attribute::kNasals},       {"B", Attribute::kStops},
    {"D", Attribute::kStops},        {"GG", Attribute::kStops},
    {"G", Attribute::kStops},        {"KK", Attribute::kStops},
    {"K", Attribute::kStops},        {"P", Attribute::kStops},
    {"T", Attribute::kStops},        {"LL", Attribute::kLiquids},
    {"L", Attribute::kLiquids},      {"RR", Attribute::kLiquids},
    {"RH", Attribute::kLiquids},     {"R", Attribute::kLiquids},
    {"H", Attribute::kFricatives},   {"J", Attribute::kFricatives},
    {"F", Attribute::kFricatives},   {"S", Attribute::kFricatives},
    {"SH", Attribute::kFricatives},  {"VV", Attribute::kFricatives},
    {"V", Attribute::kFricatives},   {"Z", Attribute::kFricatives},
    {"ZH", Attribute::kFricatives},  {"C", Attribute::kAffricate},
    {"CH", Attribute::kAffricate},   {"Y", Attribute::kGlide},
}};

inline bool IsMetuBetPhone(std::string_view symbol) {
  for (const auto& p : kMetuBet) {
    if (p.symbol == symbol) return true;
  }
  return false;
}

// Phones plus the silence class.
inline bool IsKnownPhone(std::string_view symbol) {
  return symbol == kSilence || IsMetuBetPhone(symbol);
}

inline std::optional<Attribute> AttributeOf(std::string_view symbol) {
  for (const auto& p : kMetuBet) {
    if (p.symbol == symbol) return p.attribute;
  }
  return std::nullopt;
}

}  // namespace tmenhance
