/* Copyright 2026 The fsia Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fsia/ctc.hpp"

#include <set>

namespace fsia {

Alphabet::Alphabet(std::string letters) : letters_(std::move(letters)) {
  std::set<char> seen(letters_.begin(), letters_.end());
  if (seen.size() != letters_.size() || letters_.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "alphabet letters must be nonempty and distinct");
  }
}

int Alphabet::index(char c) const {
  auto pos = letters_.find(c);
  if (pos == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("symbol '") + c + "' not in alphabet");
  }
  return static_cast<int>(pos) + 1;
}

char Alphabet::letter(int label) const {
  if (label < 1 || label > size()) {
    throw Error(ErrorCode::kInvalidArgument, "label out of alphabet range");
  }
  return letters_[label - 1];
}

Labels Alphabet::encode(std::string_view text) const {
  Labels out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index(c));
  return out;
}

std::string Alphabet::decode(std::span<const int> labels) const {
  std::string out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(letter(l));
  return out;
}

Labels collapse(std::span<const int> frame_labels) {
  Labels out;
  int prev = -1;
  for (int l : frame_labels) {
    if (l != prev && l != kBlank) out.push_back(l);
    prev = l;
  }
  return out;
}

}  // namespace fsia
