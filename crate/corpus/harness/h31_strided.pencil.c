void strided(int n, int A[const restrict static n])
{
  for (int i = 0; i < n / 2; i++)
    A[2 * i + 1] = A[2 * i] + 1;
}
