void inclusive(int n, int A[const restrict static n])
{
  for (int i = 0; i <= n - 1; i++)
    A[i] = A[i] * (i + 1);
}
