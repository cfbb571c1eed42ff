#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "instloc/common.hpp"

namespace instloc::ingest
{
inline std::string NormalizeCaption(const std::string& caption)
{
  std::string out;
  bool space = false;
  for (const char ch : caption)
  {
    if (std::isspace(static_cast<unsigned char>(ch)))
    {
      space = !out.empty();
      continue;
    }
    if (space)
    {
      out.push_back(' ');
      space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

/// Captions that do not name an object: adjectives and whole-scene terms.
/// Lookups are case- and whitespace-insensitive.
struct CaptionStoplist
{
  std::set<std::string> adjectives;
  std::set<std::string> scene_terms;
  std::set<std::string> exact_terms;

  bool Contains(const std::string& caption) const
  {
    const std::string key = NormalizeCaption(caption);
    return adjectives.count(key) > 0 || scene_terms.count(key) > 0 || exact_terms.count(key) > 0;
  }

  std::size_t Size() const { return adjectives.size() + scene_terms.size() + exact_terms.size(); }

  /// Newline-delimited phrases; '#' starts a comment. A comment line of the
  /// form "# [adjectives]" or "# [scene]" switches the category for the
  /// phrases that follow; "# [terms]" switches back to plain terms.
  static CaptionStoplist Parse(std::istream& is)
  {
    CaptionStoplist list;
    std::set<std::string>* target = &list.exact_terms;
    std::string line;
    while (std::getline(is, line))
    {
      const auto hash = line.find('#');
      if (hash != std::string::npos)
      {
        const std::string comment = NormalizeCaption(line.substr(hash + 1));
        if (comment == "[adjectives]")
        {
          target = &list.adjectives;
        }
        else if (comment == "[scene]")
        {
          target = &list.scene_terms;
        }
        else if (comment == "[terms]")
        {
          target = &list.exact_terms;
        }
        line.resize(hash);
      }
      const std::string phrase = NormalizeCaption(line);
      if (!phrase.empty())
      {
        target->insert(phrase);
      }
    }
    return list;
  }

  static CaptionStoplist Load(const std::filesystem::path& path)
  {
    std::ifstream is(path);
    if (!is)
    {
      throw InputError("cannot open stoplist " + path.string());
    }
    return Parse(is);
  }

  static CaptionStoplist Default()
  {
    CaptionStoplist list;
    list.adjectives = {"dark", "industrial", "wooden", "white", "black", "red", "green", "blue", "yellow",
                       "brown", "gray", "grey", "small", "large", "modern", "old", "new", "empty", "clean",
                       "bright", "metal", "plastic", "wood", "glass", "colorful", "cozy"};
    list.scene_terms = {"living room", "workspace", "room", "kitchen", "bedroom", "bathroom", "office",
                        "dining room", "hallway", "interior", "indoor", "home", "house", "apartment", "scene",
                        "floor", "wall", "ceiling", "building", "lab", "laboratory", "classroom"};
    return list;
  }
};

/// Drops stoplisted captions and repeated captions (after normalization),
/// preserving first-occurrence order.
inline std::vector<std::string> FilterCaptions(const std::vector<std::string>& captions,
                                               const CaptionStoplist& stoplist)
{
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& c : captions)
  {
    if (stoplist.Contains(c) || !seen.insert(NormalizeCaption(c)).second)
    {
      continue;
    }
    out.push_back(c);
  }
  return out;
}
}  // namespace instloc::ingest
