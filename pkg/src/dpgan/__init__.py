"""Double-pooling layout-to-image GAN on a small numpy autodiff engine."""
from .autodiff import Parameter, Tensor, backward, no_grad
from .models import VARIANTS, DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator

__version__ = "0.1.0"
__all__ = [
    "Tensor", "Parameter", "backward", "no_grad",
    "Generator", "GeneratorConfig", "MultiScaleDiscriminator", "DiscriminatorConfig", "VARIANTS",
]
