#pragma once

#include "codeguard/attention.hpp"
#include "codeguard/corpus.hpp"
#include "codeguard/embed.hpp"
#include "codeguard/error.hpp"
#include "codeguard/exec_provider.hpp"
#include "codeguard/homoglyph.hpp"
#include "codeguard/lexer.hpp"
#include "codeguard/linalg.hpp"
#include "codeguard/log.hpp"
#include "codeguard/metrics.hpp"
#include "codeguard/perplexity.hpp"
#include "codeguard/random.hpp"
#include "codeguard/rational.hpp"
#include "codeguard/redteam.hpp"
#include "codeguard/reference_provider.hpp"
#include "codeguard/utf8.hpp"
#include "codeguard/verify.hpp"
