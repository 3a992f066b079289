"""nerlab: a workbench for span-based named entity recognition.

Subpackages cover the full pipeline: corpus handling and splits
(`nerlab.corpus`), synthetic benchmark generation (`nerlab.synth`),
static word vectors (`nerlab.embeddings`), contextual-encoder
pretraining (`nerlab.encoder`), the transition-constrained BILOU
tagger (`nerlab.tagger`), exact-span evaluation (`nerlab.evaluation`),
the learning-curve experiment harness (`nerlab.harness`), and the
annotation HTTP service (`nerlab.service`).
"""

__version__ = "0.1.0"
