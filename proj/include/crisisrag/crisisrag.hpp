#pragma once

#include "crisisrag/backend.hpp"
#include "crisisrag/chat.hpp"
#include "crisisrag/corpus.hpp"
#include "crisisrag/embedding.hpp"
#include "crisisrag/errors.hpp"
#include "crisisrag/eval.hpp"
#include "crisisrag/labels.hpp"
#include "crisisrag/linalg.hpp"
#include "crisisrag/loraplan.hpp"
#include "crisisrag/prompting.hpp"
#include "crisisrag/rng.hpp"
#include "crisisrag/schema.hpp"
#include "crisisrag/strategies.hpp"
#include "crisisrag/text.hpp"
#include "crisisrag/tfidf.hpp"
#include "crisisrag/vindex.hpp"
