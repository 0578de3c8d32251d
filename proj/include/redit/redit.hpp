#pragma once

// Detection of machine-generated text from how much a language model edits
// it when asked to rewrite it.

#include "redit/corpus.hpp"
#include "redit/error.hpp"
#include "redit/evaluation.hpp"
#include "redit/features.hpp"
#include "redit/hash.hpp"
#include "redit/llm.hpp"
#include "redit/metrics.hpp"
#include "redit/model.hpp"
#include "redit/prompts.hpp"
#include "redit/stats.hpp"
#include "redit/unicode.hpp"
