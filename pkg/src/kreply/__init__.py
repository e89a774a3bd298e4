"""kreply: joint 1-to-n response generation with latent words.

A post and its full set of replies are treated as one training bag.  A
latent-word inference network scores every vocabulary word as a possible
latent topic for the post; a generation network decodes a reply
conditioned on the post and one latent word.  The two are trained jointly
with a policy-gradient loop, and at decode time K cluster-representative
latent words each drive one of K diverse replies.
"""

from .backend import HAS_COMPILED_KERNELS, KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["HAS_COMPILED_KERNELS", "KERNEL_BACKEND", "__version__"]
