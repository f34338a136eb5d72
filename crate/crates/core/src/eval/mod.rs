//! Evaluation harness (under construction).
