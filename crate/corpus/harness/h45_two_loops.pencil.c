void two_phase(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[i] = A[i] + 1;
  for (int i = 1; i < n; i++)
    A[i] = B[i - 1] * 2;
}
