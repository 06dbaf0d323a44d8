import vdreg.outcome.gaussian
import vdreg.outcome.local_linear
