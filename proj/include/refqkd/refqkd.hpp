#pragma once

#include "refqkd/coherent_algebra.hpp"
#include "refqkd/fock_verify.hpp"
#include "refqkd/key_rate.hpp"
#include "refqkd/phase_error_bound.hpp"
#include "refqkd/protocol_sim.hpp"
