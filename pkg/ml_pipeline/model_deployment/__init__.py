"""Parameter generation and conversion of source utterances with a trained model."""
