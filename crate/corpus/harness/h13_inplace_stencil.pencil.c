void smooth(int n, int A[const restrict static n])
{
  for (int i = 1; i < n - 1; i++)
    A[i] = (A[i - 1] + A[i] + A[i + 1]) / 3;
}
