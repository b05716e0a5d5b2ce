#pragma once

#include "adjfree/audio.hpp"
#include "adjfree/classifier.hpp"
#include "adjfree/error.hpp"
#include "adjfree/features.hpp"
#include "adjfree/moead.hpp"
#include "adjfree/objectives.hpp"
#include "adjfree/report.hpp"
#include "adjfree/subprocess.hpp"
