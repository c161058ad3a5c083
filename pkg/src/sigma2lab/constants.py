import math

#: Area of the unit 3-sphere, 2 pi^2.
S3_AREA = 2.0 * math.pi**2
#: Volume of the unit 4-ball, |S^3| / 4.
OMEGA1 = S3_AREA / 4.0
#: Right-hand side constant of sigma_2(g_E^{-1} A) = (3/2) e^{4u}.
SIGMA2_TARGET = 1.5
#: Uniform bound on C(t) from the total-volume estimate.
CAPACITY_CEILING = 4.0 / 3.0
