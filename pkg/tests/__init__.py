# Test package for model_triage
